//! End-to-end runs: seed, Dirichlet data, quadruple, Weyl spot checks, flow,
//! and the invariant checks, collected into a deterministic `RunReport`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::band::BandStructure;
use crate::config::{RunConfig, BUILD_CHECKS, CHECKS, SCHEMA_VERSION};
use crate::dirichlet::{extract_dirichlet, upper_half_plane_grid, verify_herglotz_seed};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::flow::{self, FlowState, Trajectory};
use crate::kdv;
use crate::linalg::{self, CMat};
use crate::operator::{build_quadruple, verify_quadruple, OperatorData, WeylEvaluator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst measured residual (smaller is better).
    pub value: f64,
    /// Tolerance times the scale it applies to.
    pub threshold: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    /// Largest coefficient of the quadruple at `x0`; absolute tolerances scale with it.
    pub scale: f64,
    /// Last stage that completed.
    pub stage: String,
    pub checks: Vec<CheckResult>,
    pub failures: usize,
    /// Values recorded for information only.
    pub info: BTreeMap<String, f64>,
}

impl RunReport {
    fn new(cfg: &RunConfig, command: &str) -> Self {
        RunReport {
            schema: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: cfg.hash(),
            scale: 1.0,
            stage: "start".into(),
            checks: Vec::new(),
            failures: 0,
            info: BTreeMap::new(),
        }
    }

    fn record(&mut self, name: &str, value: f64, threshold: f64, detail: impl Into<String>) {
        let pass = value <= threshold;
        if !pass {
            self.failures += 1;
        }
        self.checks.push(CheckResult {
            name: name.into(),
            value,
            threshold,
            pass,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Checks in canonical order regardless of evaluation order.
    fn sort(&mut self) {
        self.checks
            .sort_by_key(|c| CHECKS.iter().position(|n| *n == c.name).unwrap_or(usize::MAX));
    }
}

/// Density sample at a real probe.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub lambda: f64,
    pub in_band: bool,
    pub matrix: CMat,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub operator: Option<OperatorData>,
    pub trajectory: Option<Trajectory>,
    pub density: Vec<DensityRow>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            1
        }
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    checks: &'a [&'a str],
    mode: ExecMode,
}

impl Ctx<'_> {
    fn on(&self, name: &str) -> bool {
        self.checks.contains(&name)
    }
}

/// Everything that needs only the data at `x0`.
pub fn run_build(cfg: &RunConfig, checks: &[&str], mode: ExecMode) -> Result<RunOutput> {
    let build_only: Vec<&str> = checks.iter().copied().filter(|c| BUILD_CHECKS.contains(c)).collect();
    let ctx = Ctx {
        cfg,
        checks: &build_only,
        mode,
    };
    let mut report = RunReport::new(cfg, "build");
    let (od, density) = match build_stage(&ctx, &mut report)? {
        Some(v) => v,
        None => {
            return Ok(RunOutput {
                report,
                operator: None,
                trajectory: None,
                density: vec![],
            })
        }
    };
    report.sort();
    Ok(RunOutput {
        report,
        operator: Some(od),
        trajectory: None,
        density,
    })
}

/// The full pipeline.
pub fn run_flow(cfg: &RunConfig, checks: &[&str], mode: ExecMode) -> Result<RunOutput> {
    let ctx = Ctx { cfg, checks, mode };
    let mut report = RunReport::new(cfg, "flow");
    let (od, density) = match build_stage(&ctx, &mut report)? {
        Some(v) => v,
        None => {
            return Ok(RunOutput {
                report,
                operator: None,
                trajectory: None,
                density: vec![],
            })
        }
    };
    let bs = od.bs.clone();
    let s0 = FlowState::from_operator_data(&od, cfg.x0).map_err(|e| e.in_stage("state"))?;
    let traj = flow::propagate_through(&s0, &cfg.grid_nodes(), &bs, &cfg.flow).map_err(|e| e.in_stage("propagate"))?;
    report.stage = "propagate".into();
    flow_checks(&ctx, &bs, &traj, &mut report)?;
    report.stage = "invariants".into();
    report.sort();
    Ok(RunOutput {
        report,
        operator: Some(od),
        trajectory: Some(traj),
        density,
    })
}

/// Re-runs the trajectory checks on a dumped trajectory.
pub fn verify_trajectory(cfg: &RunConfig, traj: &Trajectory, checks: &[&str], mode: ExecMode) -> Result<RunReport> {
    let bs = cfg.band_structure()?;
    let first = traj
        .states
        .first()
        .ok_or_else(|| Error::MalformedState("empty trajectory".into()))?;
    if first.dim() != cfg.m || first.n() != bs.n() {
        return Err(Error::MalformedState(format!(
            "trajectory has m = {}, n = {}; config has m = {}, n = {}",
            first.dim(),
            first.n(),
            cfg.m,
            bs.n()
        )));
    }
    if traj.grid.len() != traj.states.len() || traj.grid.iter().zip(&traj.states).any(|(x, s)| *x != s.x) {
        return Err(Error::MalformedState("grid and states disagree".into()));
    }
    let flow_only: Vec<&str> = checks.iter().copied().filter(|c| !BUILD_CHECKS.contains(c)).collect();
    let ctx = Ctx {
        cfg,
        checks: &flow_only,
        mode,
    };
    let mut report = RunReport::new(cfg, "verify");
    let at_x0 = traj.index_of(cfg.x0).unwrap_or(0);
    report.scale = traj.states[at_x0].scale();
    flow_checks(&ctx, &bs, traj, &mut report)?;
    report.stage = "invariants".into();
    report.sort();
    Ok(report)
}

type Built = Option<(OperatorData, Vec<DensityRow>)>;

fn build_stage(ctx: &Ctx, report: &mut RunReport) -> Result<Built> {
    let cfg = ctx.cfg;
    let bs = cfg.band_structure()?;
    let f = cfg.seed_pencil().map_err(|e| e.in_stage("seed"))?;
    report.stage = "seed".into();
    let grid = upper_half_plane_grid(&bs);
    let herglotz = verify_herglotz_seed(&f, &bs, &grid, cfg.tolerance("herglotz_seed"));
    if ctx.on("herglotz_seed") {
        let scale = f.scale().max(1.0);
        let value = if herglotz.pass { (-herglotz.worst_eigenvalue).max(0.0) } else { f64::MAX };
        report.record("herglotz_seed", value, cfg.tolerance("herglotz_seed") * scale, herglotz.message.clone());
        if !herglotz.pass {
            report.stage = "herglotz".into();
            return Ok(None);
        }
    }
    report.stage = "herglotz".into();
    let ds = extract_dirichlet(&f, &bs, &cfg.epsilons).map_err(|e| e.in_stage("dirichlet"))?;
    report.stage = "dirichlet".into();
    for (k, d) in ds.data.iter().enumerate() {
        report.info.insert(format!("mu_{}", k + 1), d.mu);
    }
    if ctx.on("residue_identity") {
        let worst = ds.data.iter().map(|d| d.residue_identity).fold(0.0, f64::max);
        report.record("residue_identity", worst, cfg.tolerance("residue_identity"), "");
    }
    let od = build_quadruple(&f, &ds, &bs).map_err(|e| e.in_stage("operator"))?;
    report.stage = "operator".into();
    let scale = od.scale();
    report.scale = scale;
    report.info.insert("interpolation_tail".into(), od.interpolation_tail);
    let q0 = FlowState::from_operator_data(&od, cfg.x0)?.potential();
    for (i, v) in q0.iter().enumerate() {
        report.info.insert(format!("q0_re_{i}"), v.re);
    }
    if ctx.on("quadruple_identities") {
        let q = verify_quadruple(&od, &grid);
        report.record("quadruple_identities", q.max_rel(), cfg.tolerance("quadruple_identities"), "");
    }
    let ev = WeylEvaluator::new(od.clone());
    if ctx.on("weyl_positivity") {
        let (plus, minus) = ev.herglotz_margins(&grid, ctx.mode).map_err(|e| e.in_stage("weyl"))?;
        report.record(
            "weyl_positivity",
            (-plus.min(minus)).max(0.0),
            cfg.tolerance("weyl_positivity") * scale,
            "",
        );
        report.info.insert("weyl_margin_plus".into(), plus);
        report.info.insert("weyl_margin_minus".into(), minus);
    }
    if ctx.on("weyl_block_route") {
        let gaps = exec::map(ctx.mode, &grid, |&z| ev.weyl_full(z).map(|w| w.route_gap))
            .into_iter()
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.in_stage("weyl"))?;
        report.record("weyl_block_route", exec::max_of(&gaps), cfg.tolerance("weyl_block_route"), "");
    }
    let density: Vec<DensityRow> = cfg
        .lambda_probes
        .iter()
        .map(|&lambda| {
            let d = ev.spectral_density(lambda);
            DensityRow {
                lambda,
                in_band: d.in_band,
                matrix: d.matrix,
            }
        })
        .collect();
    let band_probes: Vec<f64> = cfg.lambda_probes.iter().copied().filter(|&l| bs.in_band_interior(l)).collect();
    if ctx.on("stieltjes") && !band_probes.is_empty() {
        let vals = exec::map(ctx.mode, &band_probes, |&l| ev.stieltjes_check(l, cfg.boundary_eps))
            .into_iter()
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.in_stage("weyl"))?;
        report.record("stieltjes", exec::max_of(&vals), cfg.tolerance("stieltjes") * scale, "");
    }
    if ctx.on("density_gap_zero") {
        let worst = density
            .iter()
            .filter(|d| !bs.in_band_interior(d.lambda))
            .map(|d| linalg::max_abs(&d.matrix))
            .fold(0.0, f64::max);
        report.record("density_gap_zero", worst, cfg.tolerance("density_gap_zero"), "");
    }
    report.stage = "build".into();
    Ok(Some((od, density)))
}

fn flow_checks(ctx: &Ctx, bs: &BandStructure, traj: &Trajectory, report: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let scale = report.scale;
    let tol = |name: &str| cfg.tolerance(name) * scale;
    let stage = |e: Error| e.in_stage("invariants");
    if ctx.on("flow_drift") {
        report.record("flow_drift", traj.max_drift(), tol("flow_drift"), "");
    }
    let diag = flow::diagnostics(traj, bs, ctx.mode);
    report.info.insert("max_q_norm".into(), diag.max_q_norm);
    report.info.insert("q_bound".into(), diag.q_bound);
    if ctx.on("hermiticity") {
        let detail = if diag.max_q_norm > diag.q_bound { "potential exceeds the trace bound" } else { "" };
        let value = if diag.max_q_norm > diag.q_bound { f64::MAX } else { diag.max_q_hermitian_defect };
        report.record("hermiticity", value, tol("hermiticity"), detail);
    }
    let es = bs.edge_series(cfg.series_order);
    let want_trace = ctx.on("trace_formulas") || ctx.on("zone_confinement");
    let traces = if want_trace {
        Some(
            exec::map(ctx.mode, &traj.states, |s| kdv::trace_formulas(s, bs, &es))
                .into_iter()
                .collect::<Result<Vec<_>>>()
                .map_err(stage)?,
        )
    } else {
        None
    };
    if ctx.on("zone_confinement") {
        let trace_zone = traces.iter().flatten().map(|t| t.zone_violation).fold(0.0, f64::max);
        report.record(
            "zone_confinement",
            diag.max_zone_distance.max(trace_zone),
            cfg.tolerance("zone_confinement") * bs.span().max(1.0),
            "",
        );
    }
    if ctx.on("trace_formulas") {
        let list = traces.as_ref().expect("computed above");
        report.record(
            "trace_formulas",
            list.iter().map(|t| t.max_residual()).fold(0.0, f64::max),
            tol("trace_formulas"),
            "",
        );
        let reversed = list
            .iter()
            .flat_map(|t| t.f_residuals_reversed.iter().chain(&t.h_residuals_reversed))
            .copied()
            .fold(0.0, f64::max);
        report.info.insert("trace_reversed_order_residual".into(), reversed);
    }
    let zs: Vec<Complex64> = cfg.z_samples();
    if ctx.on("riccati") {
        let mut worst = 0.0f64;
        for &z in &zs {
            worst = worst.max(flow::riccati_residual(traj, bs, z, ctx.mode).map_err(stage)?.max());
        }
        report.record("riccati", worst, tol("riccati"), "");
    }
    let band_probes: Vec<f64> = cfg.lambda_probes.iter().copied().filter(|&l| bs.in_band_interior(l)).collect();
    if ctx.on("reflectionless") && !band_probes.is_empty() {
        let mut worst = 0.0f64;
        for &l in &band_probes {
            let v = flow::reflectionless_check(traj, bs, l, cfg.boundary_eps, ctx.mode).map_err(stage)?;
            worst = worst.max(exec::max_of(&v));
        }
        report.record("reflectionless", worst, tol("reflectionless"), "");
    }
    if ctx.on("lax") {
        let r = flow::lax_residual(traj, &zs, ctx.mode).map_err(stage)?;
        report.record("lax", r.max(), tol("lax"), "");
    }
    if ctx.on("skdv") {
        let r = kdv::skdv_residual(traj, &es, ctx.mode).map_err(stage)?;
        report.record("skdv", r.max_lax(), tol("skdv"), "");
        report.info.insert("skdv_series_route".into(), r.max_series());
    }
    if ctx.on("series_routes") {
        let qs = traj.potentials();
        let explicit = kdv::explicit_low_order(&traj.grid, &qs).map_err(stage)?;
        let mexp = kdv::m_expansion_recursion(&traj.grid, &qs, 3).map_err(stage)?;
        let mut worst = 0.0f64;
        for e in &explicit {
            let i = traj.index_of(e.x).expect("explicit nodes lie on the grid");
            let p = kdv::series_from_state(&traj.states[i], &es, 2).map_err(stage)?;
            worst = worst.max(p.rhat_distance(e, 2));
        }
        for mc in &mexp {
            let i = traj.index_of(mc.x).expect("expansion nodes lie on the grid");
            let p = kdv::series_from_state(&traj.states[i], &es, 2).map_err(stage)?;
            worst = worst.max(p.rhat_distance(&kdv::rhat_from_m(mc, 2).map_err(stage)?, 2));
        }
        report.record("series_routes", worst, tol("series_routes"), "");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const SCALAR: &str = "edges = [0.0, 1.0, 2.0]\nm = 1\n[seed]\nkind = \"diagonal\"\nplacement = [[1.5]]\n";

    #[test]
    fn canonical_flow_passes() {
        let cfg = parse_config(SCALAR).unwrap();
        let out = run_flow(&cfg, CHECKS, ExecMode::Parallel).unwrap();
        assert!(out.report.passed(), "{:#?}", out.report);
        assert_eq!(out.report.checks.len(), CHECKS.len());
        assert!(out.report.info["q0_re_0"].abs() < 1e-12);
    }

    #[test]
    fn band_root_fails_at_herglotz_stage() {
        let text = "edges = [0.0, 1.0, 2.0]\nm = 1\n[seed]\nkind = \"explicit\"\ncoefficients = [[[-0.5]], [[1.0]]]\n";
        let cfg = parse_config(text).unwrap();
        let out = run_flow(&cfg, CHECKS, ExecMode::Sequential).unwrap();
        assert_eq!(out.exit_code(), 1);
        assert_eq!(out.report.stage, "herglotz");
        assert!(!out.report.check("herglotz_seed").unwrap().pass);
    }

    #[test]
    fn build_runs_only_build_checks() {
        let cfg = parse_config(SCALAR).unwrap();
        let out = run_build(&cfg, CHECKS, ExecMode::Sequential).unwrap();
        assert_eq!(out.report.checks.len(), BUILD_CHECKS.len());
        assert!(out.report.passed());
        let gap = out.density.iter().find(|d| d.lambda == 1.5).unwrap();
        assert!(!gap.in_band && linalg::max_abs(&gap.matrix) == 0.0);
    }

    #[test]
    fn verify_reproduces_flow_checks() {
        let cfg = parse_config(SCALAR).unwrap();
        let out = run_flow(&cfg, &["flow_drift", "riccati"], ExecMode::Sequential).unwrap();
        let again = verify_trajectory(&cfg, out.trajectory.as_ref().unwrap(), CHECKS, ExecMode::Parallel).unwrap();
        assert_eq!(again.check("riccati").unwrap().value, out.report.check("riccati").unwrap().value);
        assert!(again.passed());
    }
}
