//! Run configuration: TOML on disk, validated and defaulted into `RunConfig`.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::band::BandStructure;
use crate::dirichlet::{default_seed, givens, mixed_seed};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Integrator};
use crate::linalg::CMat;
use crate::pencil::MatrixPencil;

pub const SCHEMA_VERSION: u32 = 1;

/// Every named check, in report order.
pub const CHECKS: &[&str] = &[
    "herglotz_seed",
    "residue_identity",
    "quadruple_identities",
    "weyl_positivity",
    "weyl_block_route",
    "stieltjes",
    "density_gap_zero",
    "flow_drift",
    "hermiticity",
    "zone_confinement",
    "riccati",
    "reflectionless",
    "lax",
    "trace_formulas",
    "skdv",
    "series_routes",
];

/// Checks evaluated from the state at `x0` alone.
pub const BUILD_CHECKS: &[&str] = &[
    "herglotz_seed",
    "residue_identity",
    "quadruple_identities",
    "weyl_positivity",
    "weyl_block_route",
    "stieltjes",
    "density_gap_zero",
];

/// Default tolerance per check; absolute ones are multiplied by the
/// coefficient scale of the quadruple at `x0`.
pub fn default_tolerance(name: &str) -> f64 {
    match name {
        "herglotz_seed" | "quadruple_identities" | "weyl_positivity" | "hermiticity" => 1e-10,
        "weyl_block_route" => 1e-9,
        "residue_identity" | "flow_drift" | "zone_confinement" | "trace_formulas" => 1e-8,
        "stieltjes" => 1e-6,
        "density_gap_zero" => 1e-12,
        _ => 1e-3,
    }
}

/// A complex number written as `[re, im]`, or a bare real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    pub fn value(self) -> Complex64 {
        match self {
            Entry::Real(r) => Complex64::new(r, 0.0),
            Entry::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SeedSpec {
    /// Entry `(r, r)` is `prod_j (z - placement[j][r])`.
    Diagonal { placement: Vec<Vec<f64>> },
    /// Ascending coefficients `A_0, .., A_n`, each a list of rows.
    Explicit { coefficients: Vec<Vec<Vec<Entry>>> },
    /// `(D_1 + U D_2 U^*) / 2` with `U` the Givens rotation in the first two coordinates.
    Mixed {
        first: Vec<Vec<f64>>,
        second: Vec<Vec<f64>>,
        angle: f64,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.count).map(|k| self.start + k as f64 * dx).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.stop - self.start) / (self.count - 1) as f64
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowFile {
    h: Option<f64>,
    integrator: Option<String>,
    adaptive_tol: Option<f64>,
    drift_bound: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema: Option<u32>,
    edges: Vec<f64>,
    m: usize,
    seed: SeedSpec,
    #[serde(default)]
    epsilons: Vec<i8>,
    #[serde(default)]
    x0: f64,
    x_grid: Option<GridSpec>,
    #[serde(default)]
    flow: FlowFile,
    z_probes: Option<Vec<Entry>>,
    lambda_probes: Option<Vec<f64>>,
    boundary_eps: Option<f64>,
    series_order: Option<usize>,
    #[serde(default)]
    tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    rng_seed: u64,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: u32,
    pub edges: Vec<f64>,
    pub m: usize,
    pub seed: SeedSpec,
    pub epsilons: Vec<i8>,
    pub x0: f64,
    pub x_grid: GridSpec,
    pub flow: FlowConfig,
    pub z_probes: Vec<[f64; 2]>,
    pub lambda_probes: Vec<f64>,
    pub boundary_eps: f64,
    pub series_order: usize,
    /// One entry per name in `CHECKS`.
    pub tolerances: BTreeMap<String, f64>,
    pub rng_seed: u64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .map(|l| format!("line {l}"))
            .unwrap_or_else(|| "document".into());
        Error::Parse {
            field: line,
            message: e.message().to_string(),
        }
    })?;
    resolve(raw)
}

fn resolve(raw: ConfigFile) -> Result<RunConfig> {
    let schema = raw.schema.unwrap_or(SCHEMA_VERSION);
    if schema != SCHEMA_VERSION {
        return Err(invalid(format!("unsupported schema version {schema}, expected {SCHEMA_VERSION}")));
    }
    let bs = BandStructure::new(raw.edges.clone())?;
    if raw.m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let span = bs.span();
    let n = bs.n();
    if let Some(bad) = raw.epsilons.iter().find(|&&e| e != 1 && e != -1) {
        return Err(invalid(format!("epsilons must be +1 or -1, got {bad}")));
    }
    if !raw.x0.is_finite() {
        return Err(invalid("x0 must be finite"));
    }
    let x_grid = raw.x_grid.unwrap_or(GridSpec {
        start: raw.x0,
        stop: raw.x0 + 1.0,
        count: 101,
    });
    if x_grid.count < 5 {
        return Err(invalid(format!("x_grid.count must be at least 5, got {}", x_grid.count)));
    }
    if !(x_grid.stop > x_grid.start) || !x_grid.start.is_finite() || !x_grid.stop.is_finite() {
        return Err(invalid("x_grid needs finite start < stop"));
    }
    let k = (raw.x0 - x_grid.start) / x_grid.spacing();
    if k < -1e-9 || k > (x_grid.count - 1) as f64 + 1e-9 || (k - k.round()).abs() > 1e-9 {
        return Err(invalid(format!("x0 = {} must be a node of x_grid", raw.x0)));
    }
    let h = raw.flow.h.unwrap_or(1e-3 * span);
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("flow.h must be positive, got {h}")));
    }
    let drift_bound = raw.flow.drift_bound.unwrap_or(1e-6);
    if !(drift_bound > 0.0) {
        return Err(invalid("flow.drift_bound must be positive"));
    }
    let integrator = match raw.flow.integrator.as_deref().unwrap_or("fixed") {
        "fixed" => Integrator::Fixed,
        "adaptive" => {
            let tol = raw.flow.adaptive_tol.unwrap_or(1e-12);
            if !(tol > 0.0) {
                return Err(invalid("flow.adaptive_tol must be positive"));
            }
            Integrator::Adaptive { tol }
        }
        other => return Err(invalid(format!("flow.integrator must be \"fixed\" or \"adaptive\", got {other:?}"))),
    };
    let mid = 0.5 * (bs.edges()[0] + bs.edges()[2 * n]);
    let z_probes: Vec<[f64; 2]> = raw
        .z_probes
        .unwrap_or_else(|| vec![Entry::Complex([0.0, 1.0]), Entry::Complex([mid, 0.5 * span])])
        .into_iter()
        .map(|e| {
            let z = e.value();
            [z.re, z.im]
        })
        .collect();
    if z_probes.iter().any(|z| !(z[1] > 0.0)) {
        return Err(invalid("z_probes must lie in the open upper half-plane"));
    }
    let lambda_probes = raw.lambda_probes.unwrap_or_else(|| {
        let mut v: Vec<f64> = bs.bands().iter().filter(|b| b.hi.is_finite()).map(|b| b.midpoint()).collect();
        v.extend(bs.gaps().iter().map(|g| g.midpoint()));
        v.push(bs.edges()[2 * n] + 0.5 * span);
        v.sort_by(f64::total_cmp);
        v
    });
    if lambda_probes.iter().any(|l| !l.is_finite() || bs.edges().contains(l)) {
        return Err(invalid("lambda_probes must be finite and avoid the band edges"));
    }
    let boundary_eps = raw.boundary_eps.unwrap_or(1e-5);
    if !(boundary_eps > 0.0) {
        return Err(invalid("boundary_eps must be positive"));
    }
    let series_order = raw.series_order.unwrap_or(n + 3);
    if series_order < n + 1 {
        return Err(invalid(format!("series_order must be at least n + 1 = {}", n + 1)));
    }
    let mut tolerances = BTreeMap::new();
    for name in CHECKS {
        tolerances.insert(name.to_string(), default_tolerance(name));
    }
    for (name, v) in raw.tolerances {
        if !CHECKS.contains(&name.as_str()) {
            return Err(invalid(format!("unknown tolerance {name:?}")));
        }
        if !(v > 0.0) {
            return Err(invalid(format!("tolerance {name} must be positive, got {v}")));
        }
        tolerances.insert(name, v);
    }
    let cfg = RunConfig {
        schema,
        edges: raw.edges,
        m: raw.m,
        seed: raw.seed,
        epsilons: raw.epsilons,
        x0: raw.x0,
        x_grid,
        flow: FlowConfig {
            h,
            integrator,
            drift_bound,
        },
        z_probes,
        lambda_probes,
        boundary_eps,
        series_order,
        tolerances,
        rng_seed: raw.rng_seed,
    };
    cfg.seed_pencil()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn band_structure(&self) -> Result<BandStructure> {
        BandStructure::new(self.edges.clone())
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| default_tolerance(name))
    }

    /// Grid nodes with the node nearest `x0` set to `x0` exactly.
    pub fn grid_nodes(&self) -> Vec<f64> {
        let mut nodes = self.x_grid.nodes();
        let k = ((self.x0 - self.x_grid.start) / self.x_grid.spacing()).round() as usize;
        let last = nodes.len() - 1;
        nodes[k.min(last)] = self.x0;
        nodes
    }

    pub fn z_samples(&self) -> Vec<Complex64> {
        self.z_probes.iter().map(|z| Complex64::new(z[0], z[1])).collect()
    }

    /// The seed pencil `F(z, x0)`.
    pub fn seed_pencil(&self) -> Result<MatrixPencil> {
        let bs = self.band_structure()?;
        match &self.seed {
            SeedSpec::Diagonal { placement } => default_seed(&bs, self.m, placement),
            SeedSpec::Mixed {
                first,
                second,
                angle,
                phase,
            } => {
                if self.m < 2 {
                    return Err(invalid("a mixed seed needs m >= 2"));
                }
                mixed_seed(&bs, first, second, &givens(self.m, *angle, *phase))
            }
            SeedSpec::Explicit { coefficients } => {
                let mut mats = Vec::with_capacity(coefficients.len());
                for (k, rows) in coefficients.iter().enumerate() {
                    if rows.len() != self.m || rows.iter().any(|r| r.len() != self.m) {
                        return Err(invalid(format!("seed coefficient {k} is not {m}x{m}", m = self.m)));
                    }
                    let mut a = CMat::zeros(self.m, self.m);
                    for (i, row) in rows.iter().enumerate() {
                        for (j, e) in row.iter().enumerate() {
                            a[(i, j)] = e.value();
                        }
                    }
                    mats.push(a);
                }
                if mats.len() != bs.n() + 1 {
                    return Err(invalid(format!(
                        "explicit seed needs {} coefficients (degree n = {}), got {}",
                        bs.n() + 1,
                        bs.n(),
                        mats.len()
                    )));
                }
                MatrixPencil::new(mats)
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Resolves a `--checks` list: bare names select, `-name` removes. An
/// empty list keeps every check.
pub fn select_checks(list: &str) -> Result<Vec<&'static str>> {
    let items: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let lookup = |name: &str| -> Result<&'static str> {
        CHECKS
            .iter()
            .copied()
            .find(|c| *c == name)
            .ok_or_else(|| invalid(format!("unknown check {name:?}; known: {}", CHECKS.join(", "))))
    };
    let positive: Vec<&'static str> = items
        .iter()
        .filter(|s| !s.starts_with('-'))
        .map(|s| lookup(s))
        .collect::<Result<_>>()?;
    let negative: Vec<&'static str> = items
        .iter()
        .filter_map(|s| s.strip_prefix('-'))
        .map(lookup)
        .collect::<Result<_>>()?;
    Ok(CHECKS
        .iter()
        .copied()
        .filter(|c| positive.is_empty() || positive.contains(c))
        .filter(|c| !negative.contains(c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "edges = [0.0, 1.0, 2.0]\nm = 1\n[seed]\nkind = \"diagonal\"\nplacement = [[1.5]]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.series_order, 4);
        assert_eq!(cfg.flow.h, 2e-3);
        assert!(cfg.epsilons.is_empty());
        assert_eq!(cfg.x_grid.count, 101);
        assert_eq!(cfg.x_grid.start, 0.0);
        assert_eq!(cfg.tolerances.len(), CHECKS.len());
        assert_eq!(cfg.lambda_probes, vec![0.5, 1.5, 3.0]);
    }

    #[test]
    fn even_edge_count_is_a_validation_error() {
        let text = MINIMAL.replace("[0.0, 1.0, 2.0]", "[0.0, 1.0]");
        assert!(matches!(parse_config(&text), Err(Error::EvenEdgeCount(2))));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = format!("m = 1\nx0 = \"nope\"\n{}", MINIMAL.replace("m = 1\n", ""));
        match parse_config(&text) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "line 2"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config(&format!("{MINIMAL}bogus = 1\n")), Err(Error::Parse { .. })));
    }

    #[test]
    fn invariants_enforced() {
        let bad_grid = format!("{MINIMAL}[x_grid]\nstart = 0.0\nstop = 1.0\ncount = 4\n");
        assert!(matches!(parse_config(&bad_grid), Err(Error::Validation(_))));
        let shifted = format!("x0 = 0.3\n{MINIMAL}[x_grid]\nstart = 0.0\nstop = 1.0\ncount = 11\n");
        let cfg = parse_config(&shifted).unwrap();
        assert_eq!(cfg.grid_nodes()[3], 0.3);
        let off_grid = format!("x0 = 0.05\n{MINIMAL}[x_grid]\nstart = 0.0\nstop = 1.0\ncount = 11\n");
        assert!(matches!(parse_config(&off_grid), Err(Error::Validation(_))));
        let tol = format!("{MINIMAL}[tolerances]\nriccati = -1.0\n");
        assert!(matches!(parse_config(&tol), Err(Error::Validation(_))));
        let outside = MINIMAL.replace("[[1.5]]", "[[0.5]]");
        assert!(matches!(parse_config(&outside), Err(Error::PlacementOutsideGap { .. })));
    }

    #[test]
    fn explicit_and_mixed_seeds() {
        let text = "edges = [0.0, 1.0, 2.0]\nm = 1\n[seed]\nkind = \"explicit\"\ncoefficients = [[[-1.5]], [[[1.0, 0.0]]]]\n";
        let cfg = parse_config(text).unwrap();
        let f = cfg.seed_pencil().unwrap();
        assert_eq!(f.coeff(0)[(0, 0)].re, -1.5);
        let mixed = "edges = [-2.0, -1.0, 0.0, 1.0, 2.0]\nm = 2\n[seed]\nkind = \"mixed\"\nfirst = [[-0.9, -0.1], [1.1, 1.9]]\nsecond = [[-0.9, -0.1], [1.9, 1.1]]\nangle = 0.785\n";
        assert!(parse_config(mixed).is_ok());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config(&format!("rng_seed = 3\n{MINIMAL}")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn check_selection() {
        assert_eq!(select_checks("").unwrap().len(), CHECKS.len());
        assert_eq!(select_checks("riccati, lax").unwrap(), vec!["riccati", "lax"]);
        assert_eq!(select_checks("-skdv").unwrap().len(), CHECKS.len() - 1);
        assert!(select_checks("nonsense").is_err());
    }
}
