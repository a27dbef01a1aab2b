//! Artifacts on disk: potential and density tables, the JSON report, and the
//! trajectory dump that `verify` and `export` reload.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::linalg::CMat;
use crate::pipeline::{DensityRow, RunReport};

pub const POTENTIAL_FILE: &str = "potential.csv";
pub const DENSITY_FILE: &str = "density.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.json";

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn entry_header(out: &mut String, prefix: &str, size: usize) {
    for i in 1..=size {
        for j in 1..=size {
            let _ = write!(out, ",re_{prefix}_{i}{j},im_{prefix}_{i}{j}");
        }
    }
    out.push('\n');
}

fn entry_row(out: &mut String, a: &CMat) {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let _ = write!(out, ",{},{}", num(a[(i, j)].re), num(a[(i, j)].im));
        }
    }
    out.push('\n');
}

/// Header `x,re_Q_11,im_Q_11,..`, one row per node.
pub fn potential_table(traj: &Trajectory) -> String {
    let m = traj.states.first().map(|s| s.dim()).unwrap_or(0);
    let mut out = String::from("x");
    entry_header(&mut out, "Q", m);
    for s in &traj.states {
        out.push_str(&num(s.x));
        entry_row(&mut out, &s.potential());
    }
    out
}

/// Header `lambda,in_band,re_D_11,..`; rows outside the bands are zero with `in_band = 0`.
pub fn density_table(rows: &[DensityRow]) -> String {
    let size = rows.first().map(|r| r.matrix.nrows()).unwrap_or(0);
    let mut out = String::from("lambda,in_band");
    entry_header(&mut out, "D", size);
    for r in rows {
        let _ = write!(out, "{},{}", num(r.lambda), u8::from(r.in_band));
        entry_row(&mut out, &r.matrix);
    }
    out
}

pub fn report_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let text = serde_json::to_string(traj).map_err(|e| Error::Validation(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: format!("{} line {}", path.display(), e.line()),
        message: e.to_string(),
    })
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: format!("{} line {}", path.display(), e.line()),
        message: e.to_string(),
    })
}

/// Writes whichever artifacts are present into `dir`; returns the paths.
pub fn export(
    dir: &Path,
    report: Option<&RunReport>,
    traj: Option<&Trajectory>,
    density: &[DensityRow],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    if let Some(t) = traj {
        put(POTENTIAL_FILE, potential_table(t))?;
    }
    if !density.is_empty() {
        put(DENSITY_FILE, density_table(density))?;
    }
    if let Some(r) = report {
        put(REPORT_FILE, report_json(r)?)?;
    }
    if let Some(t) = traj {
        let p = dir.join(TRAJECTORY_FILE);
        write_trajectory(&p, t)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, CHECKS};
    use crate::exec::ExecMode;
    use crate::pipeline::run_flow;

    fn canonical() -> crate::pipeline::RunOutput {
        let text = "edges = [0.0, 1.0, 2.0]\nm = 1\n[seed]\nkind = \"diagonal\"\nplacement = [[1.5]]\n[x_grid]\nstart = 0.0\nstop = 0.2\ncount = 21\n";
        run_flow(&parse_config(text).unwrap(), CHECKS, ExecMode::Sequential).unwrap()
    }

    #[test]
    fn potential_table_layout() {
        let out = canonical();
        let table = potential_table(out.trajectory.as_ref().unwrap());
        let mut lines = table.lines();
        assert_eq!(lines.next().unwrap(), "x,re_Q_11,im_Q_11");
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[0], 0.0);
        assert!(first[1].abs() < 1e-12 && first[2].abs() < 1e-12);
        assert_eq!(table.lines().count(), 22);
    }

    #[test]
    fn density_gap_row_is_flagged_zero() {
        let out = canonical();
        let table = density_table(&out.density);
        let row = table.lines().find(|l| l.starts_with(&num(1.5))).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "0");
        assert!(fields[2..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let out = canonical();
        let dir = tempfile::tempdir().unwrap();
        let written = export(dir.path(), Some(&out.report), out.trajectory.as_ref(), &out.density).unwrap();
        assert_eq!(written.len(), 4);
        let back = read_trajectory(&dir.path().join(TRAJECTORY_FILE)).unwrap();
        assert_eq!(&back, out.trajectory.as_ref().unwrap());
        assert_eq!(read_report(&dir.path().join(REPORT_FILE)).unwrap(), out.report);
    }
}
