use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use finband::config::select_checks;
use finband::export::{self, TRAJECTORY_FILE};
use finband::pipeline::RunOutput;
use finband::{load_config, run_build, run_flow, verify_trajectory, Error, ExecMode, RunConfig, RunReport};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

const VERIFY_REPORT_FILE: &str = "verify_report.json";
const TIMING_FILE: &str = "timing.json";
const PARTIAL_FILE: &str = "partial_trajectory.json";

/// Matrix finite-band Schrödinger potentials: build, propagate, certify.
#[derive(Parser, Debug)]
#[command(name = "finband", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct the operator data at x0 and run the checks that need nothing else.
    Build(Args),
    /// Full pipeline: build, propagate over the x grid, check every invariant.
    Flow(Args),
    /// Re-check the trajectory dump in the output directory.
    Verify(Args),
    /// Rewrite the tables from the trajectory dump without re-integrating.
    Export(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated checks; `name` selects, `-name` removes.
    #[arg(long, allow_hyphen_values = true)]
    checks: Option<String>,
    /// Override the integrator step.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

/// Errors in the inputs map to 2, everything else raised while computing to 3.
fn exit_for(err: &Error) -> u8 {
    match err.root() {
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::Io(_)
        | Error::NonMonotoneEdges { .. }
        | Error::EvenEdgeCount(_)
        | Error::NonFiniteEdge(_)
        | Error::PlacementOutsideGap { .. }
        | Error::WrongSignCount { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn fail(code: u8, err: &Error) -> ExitCode {
    eprintln!("finband: {err}");
    ExitCode::from(code)
}

/// Names the file an I/O error came from.
fn reading(path: &Path) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Validation(format!("cannot read {}: {io}", path.display())),
        e => e,
    }
}

fn prepare(args: &Args) -> finband::Result<(RunConfig, Vec<&'static str>)> {
    let mut cfg = load_config(&args.config).map_err(reading(&args.config))?;
    if let Some(h) = args.h {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Validation(format!("--h must be a positive real, got {h}")));
        }
        cfg.flow.h = h;
    }
    let checks = select_checks(args.checks.as_deref().unwrap_or(""))?;
    Ok((cfg, checks))
}

fn summarize(report: &RunReport, quiet: bool) {
    if quiet {
        return;
    }
    for c in &report.checks {
        let mark = if c.pass { "pass" } else { "FAIL" };
        println!("{mark}  {:<22} {:.3e} <= {:.3e}", c.name, c.value, c.threshold);
    }
    println!("{} check(s), {} failure(s), stage {}", report.checks.len(), report.failures, report.stage);
}

fn write_report(dir: &Path, name: &str, report: &RunReport) -> finband::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), export::report_json(report)?)?;
    Ok(())
}

fn finish(out: &RunOutput, args: &Args) -> finband::Result<u8> {
    export::export(&args.out, Some(&out.report), out.trajectory.as_ref(), &out.density)?;
    summarize(&out.report, args.quiet);
    Ok(if out.report.passed() { 0 } else { EXIT_CHECK_FAILED })
}

fn build(args: &Args) -> finband::Result<u8> {
    let (cfg, checks) = prepare(args)?;
    let out = run_build(&cfg, &checks, ExecMode::Parallel)?;
    finish(&out, args)
}

fn flow(args: &Args) -> finband::Result<u8> {
    let (cfg, checks) = prepare(args)?;
    let start = Instant::now();
    let out = match run_flow(&cfg, &checks, ExecMode::Parallel) {
        Ok(out) => out,
        Err(err) => {
            if let Error::DriftExceeded { partial, .. } = err.root() {
                fs::create_dir_all(&args.out)?;
                export::write_trajectory(&args.out.join(PARTIAL_FILE), partial)?;
            }
            return Err(err);
        }
    };
    let code = finish(&out, args)?;
    // Kept apart from the report so the report stays byte-deterministic.
    let timing = serde_json::json!({ "seconds": start.elapsed().as_secs_f64() });
    fs::write(args.out.join(TIMING_FILE), format!("{timing:#}\n"))?;
    Ok(code)
}

fn verify(args: &Args) -> finband::Result<u8> {
    let (cfg, checks) = prepare(args)?;
    let dump = args.out.join(TRAJECTORY_FILE);
    let traj = export::read_trajectory(&dump).map_err(reading(&dump))?;
    let report = verify_trajectory(&cfg, &traj, &checks, ExecMode::Parallel)?;
    write_report(&args.out, VERIFY_REPORT_FILE, &report)?;
    summarize(&report, args.quiet);
    Ok(if report.passed() { 0 } else { EXIT_CHECK_FAILED })
}

fn export_tables(args: &Args) -> finband::Result<u8> {
    let (cfg, _) = prepare(args)?;
    let dump = args.out.join(TRAJECTORY_FILE);
    let traj = export::read_trajectory(&dump).map_err(reading(&dump))?;
    // Density needs only the data at x0; no check is rerun.
    let built = run_build(&cfg, &[], ExecMode::Parallel)?;
    let written = export::export(&args.out, None, Some(&traj), &built.density)?;
    if !args.quiet {
        for p in written {
            println!("{}", p.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Build(a) => build(a),
        Command::Flow(a) => flow(a),
        Command::Verify(a) => verify(a),
        Command::Export(a) => export_tables(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => fail(exit_for(&err), &err),
    }
}
