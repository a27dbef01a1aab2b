//! x-dependence of the quadruple: the autonomous first-order system for the
//! coefficient tuple, its RK4 integration, and the dynamical identities
//! (conservation, Riccati, reflectionless, Lax) along a trajectory.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::band::BandStructure;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::linalg::{self, c, serde_mat_list, CMat};
use crate::operator::{self, HalfLine, OperatorData, QuadrupleReport};
use crate::pencil::MatrixPencil;

/// Coefficients in the complementary indexing `F(z) = sum_l F_{n-l} z^l`:
/// `f[k]` multiplies `z^{n-k}`, `g*[k]` multiplies `z^{n-1-k}`, `h[k]`
/// multiplies `z^{n+1-k}`. `f[0] = h[0] = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub x: f64,
    #[serde(with = "serde_mat_list")]
    pub f: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub g1: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub g2: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub h: Vec<CMat>,
}

impl FlowState {
    pub fn new(x: f64, f: Vec<CMat>, g1: Vec<CMat>, g2: Vec<CMat>, h: Vec<CMat>) -> Result<Self> {
        let n = f.len().checked_sub(1).ok_or_else(|| Error::MalformedState("empty F".into()))?;
        if n == 0 || g1.len() != n || g2.len() != n || h.len() != n + 2 {
            return Err(Error::MalformedState(format!(
                "coefficient counts F={}, G1={}, G2={}, H={} do not fit one degree",
                f.len(),
                g1.len(),
                g2.len(),
                h.len()
            )));
        }
        let m = f[0].nrows();
        if f.iter().chain(&g1).chain(&g2).chain(&h).any(|a| a.nrows() != m || a.ncols() != m) {
            return Err(Error::MalformedState("inconsistent matrix sizes".into()));
        }
        let eye = linalg::eye(m);
        if linalg::max_abs(&(&f[0] - &eye)) > 1e-12 || linalg::max_abs(&(&h[0] - &eye)) > 1e-12 {
            return Err(Error::MalformedState("leading coefficients of F and H must be the identity".into()));
        }
        Ok(FlowState { x, f, g1, g2, h })
    }

    /// Copies the quadruple coefficients into a state at `x0`.
    pub fn from_operator_data(od: &OperatorData, x0: f64) -> Result<Self> {
        let n = od.bs.n();
        let pick = |p: &MatrixPencil, deg: usize| -> Vec<CMat> {
            (0..=deg).map(|k| p.coeff(deg - k)).collect()
        };
        FlowState::new(
            x0,
            pick(&od.f, n),
            pick(&od.g1, n - 1),
            pick(&od.g2, n - 1),
            pick(&od.h, n + 1),
        )
    }

    pub fn n(&self) -> usize {
        self.f.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.f[0].nrows()
    }

    /// `Q = F_1 - H_1`.
    pub fn potential(&self) -> CMat {
        &self.f[1] - &self.h[1]
    }

    fn f_at(&self, k: usize) -> CMat {
        self.f.get(k).cloned().unwrap_or_else(|| linalg::zeros(self.dim()))
    }

    fn h_at(&self, k: usize) -> CMat {
        self.h.get(k).cloned().unwrap_or_else(|| linalg::zeros(self.dim()))
    }

    /// Right-hand side of the autonomous system; the returned state's `x`
    /// is 1 (the rate of `x` itself).
    pub fn derivative(&self) -> FlowState {
        let n = self.n();
        let m = self.dim();
        let q = self.potential();
        let zero = linalg::zeros(m);
        let g = |list: &[CMat], k: isize| -> CMat {
            if k < 0 || k as usize >= n {
                zero.clone()
            } else {
                list[k as usize].clone()
            }
        };
        let mut df = vec![zero.clone(); n + 1];
        for l in 1..=n {
            df[l] = -(&self.g1[l - 1] + &self.g2[l - 1]);
        }
        let mut dg1 = Vec::with_capacity(n);
        let mut dg2 = Vec::with_capacity(n);
        for l in 0..n {
            let tail = self.f_at(l + 2) - self.h_at(l + 2);
            dg1.push(-(&q * &self.f[l + 1]) + &tail);
            dg2.push(-(&self.f[l + 1] * &q) + &tail);
        }
        let mut dh = vec![zero.clone(); n + 2];
        for l in 1..=n + 1 {
            let li = l as isize;
            dh[l] = g(&self.g1, li - 1) + g(&self.g2, li - 1) - g(&self.g1, li - 2) * &q - &q * g(&self.g2, li - 2);
        }
        FlowState {
            x: 1.0,
            f: df,
            g1: dg1,
            g2: dg2,
            h: dh,
        }
    }

    /// `self + a * d` (including `x`).
    pub fn axpy(&self, a: f64, d: &FlowState) -> FlowState {
        let comb = |u: &[CMat], v: &[CMat]| -> Vec<CMat> { u.iter().zip(v).map(|(p, q)| p + q * c(a)).collect() };
        FlowState {
            x: self.x + a * d.x,
            f: comb(&self.f, &d.f),
            g1: comb(&self.g1, &d.g1),
            g2: comb(&self.g2, &d.g2),
            h: comb(&self.h, &d.h),
        }
    }

    /// Projects onto the structural constraints: Hermitian `F_l`, `H_l` and
    /// `G_2 = G_1^*`.
    pub fn symmetrize(&mut self) {
        for a in self.f.iter_mut().chain(self.h.iter_mut()) {
            *a = linalg::hermitize(a);
        }
        for (a, b) in self.g1.iter_mut().zip(self.g2.iter_mut()) {
            let avg = (&*a + b.adjoint()) * c(0.5);
            *b = avg.adjoint();
            *a = avg;
        }
    }

    /// The four pencils with ascending-power storage.
    pub fn pencils(&self) -> (MatrixPencil, MatrixPencil, MatrixPencil, MatrixPencil) {
        let asc = |list: &[CMat]| MatrixPencil::new(list.iter().rev().cloned().collect()).expect("dims");
        (asc(&self.f), asc(&self.g1), asc(&self.g2), asc(&self.h))
    }

    /// `M_pm(z, x)` from this state.
    pub fn weyl(&self, bs: &BandStructure, z: Complex64, side: HalfLine) -> Result<CMat> {
        let (f, g1, g2, _) = self.pencils();
        operator::weyl_from_values(&f.eval(z), &g1.eval(z), &g2.eval(z), bs.eval_sqrt_r(z), side)
            .map(|(m, _)| m)
            .map_err(|_| Error::at(z))
    }

    /// Largest max-entry norm among all coefficients.
    pub fn scale(&self) -> f64 {
        [&self.f, &self.g1, &self.g2, &self.h]
            .iter()
            .map(|l| linalg::max_abs_list(l))
            .fold(1.0, f64::max)
    }

    /// Largest max-entry difference across all coefficients.
    pub fn distance(&self, other: &FlowState) -> f64 {
        let d = |u: &[CMat], v: &[CMat]| u.iter().zip(v).map(|(p, q)| linalg::max_abs(&(p - q))).fold(0.0, f64::max);
        d(&self.f, &other.f)
            .max(d(&self.g1, &other.g1))
            .max(d(&self.g2, &other.g2))
            .max(d(&self.h, &other.h))
    }
}

fn rk4_step(s: &FlowState, h: f64) -> FlowState {
    let k1 = s.derivative();
    let k2 = s.axpy(0.5 * h, &k1).derivative();
    let k3 = s.axpy(0.5 * h, &k2).derivative();
    let k4 = s.axpy(h, &k3).derivative();
    let mut next = s
        .axpy(h / 6.0, &k1)
        .axpy(h / 3.0, &k2)
        .axpy(h / 3.0, &k3)
        .axpy(h / 6.0, &k4);
    next.x = s.x + h;
    next.symmetrize();
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Integrator {
    /// Classical RK4 with step `|h|` (shrunk to land on every grid node).
    Fixed,
    /// RK4 with step doubling; local error per unit length kept below `tol`.
    Adaptive { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub h: f64,
    pub integrator: Integrator,
    /// Abort when the invariant drift exceeds `drift_bound * scale`.
    pub drift_bound: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            h: 1e-3,
            integrator: Integrator::Fixed,
            drift_bound: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<FlowState>,
    pub h: f64,
    /// Max coefficientwise identity residual per node.
    pub drift: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn potentials(&self) -> Vec<CMat> {
        self.states.iter().map(FlowState::potential).collect()
    }

    pub fn max_drift(&self) -> f64 {
        exec::max_of(&self.drift)
    }

    /// Node index of `x`, if it is on the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.grid.iter().position(|&g| g == x)
    }

    /// Uniform spacing of the grid, or `InvalidGrid`.
    pub fn spacing(&self) -> Result<f64> {
        uniform_spacing(&self.grid)
    }
}

pub(crate) fn uniform_spacing(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("fewer than two nodes".into()));
    }
    let dx = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let tol = 1e-9 * dx.abs().max(f64::MIN_POSITIVE);
    if grid.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > tol.max(1e-12 * w[0].abs())) {
        return Err(Error::InvalidGrid("grid spacing is not uniform".into()));
    }
    Ok(dx)
}

/// Max coefficientwise residual of the structural identities: self-adjoint
/// `F`, `H`, `G_2 = G_1^*`, and the four product identities.
pub fn state_drift(s: &FlowState, bs: &BandStructure) -> f64 {
    let r = invariant_residuals(s, bs, &[]);
    r.max_coeff_abs()
}

/// Integrates along `grid`, which must start at `s0.x` and be strictly
/// monotone; a decreasing grid integrates with negative steps.
pub fn propagate(s0: &FlowState, grid: &[f64], bs: &BandStructure, cfg: &FlowConfig) -> Result<Trajectory> {
    if grid.first() != Some(&s0.x) {
        return Err(Error::InvalidGrid(format!("grid must start at x0 = {}", s0.x)));
    }
    let dir = if grid.len() > 1 && grid[1] < grid[0] { -1.0 } else { 1.0 };
    if grid.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(Error::InvalidGrid("grid must be strictly monotone".into()));
    }
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(Error::InvalidGrid(format!("step must be positive, got {}", cfg.h)));
    }
    let scale = s0.scale();
    let bound = cfg.drift_bound * scale;
    let mut states = vec![s0.clone()];
    let mut drift = vec![state_drift(s0, bs)];
    let mut s = s0.clone();
    let mut h_adapt = cfg.h;
    for (i, w) in grid.windows(2).enumerate() {
        let span = w[1] - w[0];
        match cfg.integrator {
            Integrator::Fixed => {
                let steps = (span.abs() / cfg.h).ceil().max(1.0) as usize;
                let hh = span / steps as f64;
                for _ in 0..steps {
                    s = rk4_step(&s, hh);
                }
            }
            Integrator::Adaptive { tol } => {
                s = adaptive_segment(&s, w[1], &mut h_adapt, tol, cfg.h)?;
            }
        }
        s.x = w[1];
        let d = state_drift(&s, bs);
        states.push(s.clone());
        drift.push(d);
        if !(d <= bound) {
            let partial = Trajectory {
                grid: grid[..=i + 1].to_vec(),
                states,
                h: cfg.h,
                drift,
            };
            return Err(Error::DriftExceeded {
                drift: d,
                bound,
                x: w[1],
                partial: Box::new(partial),
            });
        }
    }
    Ok(Trajectory {
        grid: grid.to_vec(),
        states,
        h: cfg.h,
        drift,
    })
}

fn adaptive_segment(s: &FlowState, target: f64, h: &mut f64, tol: f64, h_max: f64) -> Result<FlowState> {
    let mut cur = s.clone();
    let dir = (target - s.x).signum();
    let mut guard = 0usize;
    while (target - cur.x) * dir > 0.0 {
        guard += 1;
        if guard > 10_000_000 {
            return Err(Error::GridTooCoarse("adaptive integrator failed to make progress".into()));
        }
        let remaining = (target - cur.x).abs();
        let step = h.min(remaining).min(h_max);
        let full = rk4_step(&cur, dir * step);
        let half = rk4_step(&rk4_step(&cur, dir * step / 2.0), dir * step / 2.0);
        let err = full.distance(&half) / 15.0;
        let allowed = tol * step * cur.scale();
        if err <= allowed || step < 1e-12 {
            // Richardson-corrected value keeps fifth-order local accuracy.
            let mut next = half.axpy(1.0 / 15.0, &half.axpy(-1.0, &full).with_x(0.0));
            next.x = if step >= remaining { target } else { cur.x + dir * step };
            next.symmetrize();
            cur = next;
        }
        let factor = if err == 0.0 { 2.0 } else { (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 2.0) };
        *h = (step * factor).min(h_max);
    }
    Ok(cur)
}

impl FlowState {
    fn with_x(mut self, x: f64) -> Self {
        self.x = x;
        self
    }
}

/// Integrates both ways from `s0.x` over `x0 + k dx`, `k = -back..=forward`,
/// returning one increasing trajectory.
pub fn propagate_around(
    s0: &FlowState,
    dx: f64,
    back: usize,
    forward: usize,
    bs: &BandStructure,
    cfg: &FlowConfig,
) -> Result<Trajectory> {
    let x0 = s0.x;
    let grid: Vec<f64> = (0..=back + forward)
        .map(|k| x0 + (k as f64 - back as f64) * dx)
        .collect();
    propagate_through(s0, &grid, bs, cfg)
}

/// Integrates over an increasing grid that contains `s0.x` as a node,
/// backwards for the nodes below it and forwards for the rest.
pub fn propagate_through(s0: &FlowState, grid: &[f64], bs: &BandStructure, cfg: &FlowConfig) -> Result<Trajectory> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    let k0 = grid
        .iter()
        .position(|&g| g == s0.x)
        .ok_or_else(|| Error::InvalidGrid(format!("x0 = {} is not a grid node", s0.x)))?;
    let bwd: Vec<f64> = grid[..=k0].iter().rev().copied().collect();
    let tb = propagate(s0, &bwd, bs, cfg)?;
    let tf = propagate(s0, &grid[k0..], bs, cfg)?;
    let mut states: Vec<FlowState> = tb.states.into_iter().rev().collect();
    let mut drift: Vec<f64> = tb.drift.into_iter().rev().collect();
    states.extend(tf.states.into_iter().skip(1));
    drift.extend(tf.drift.into_iter().skip(1));
    Ok(Trajectory {
        grid: grid.to_vec(),
        states,
        h: cfg.h,
        drift,
    })
}

/// Conserved identity residuals for a single state (coefficientwise, and
/// pointwise at the samples), plus self-adjointness of `F` and `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub identities: QuadrupleReport,
    pub f_selfadjoint_defect: f64,
    pub h_selfadjoint_defect: f64,
}

impl InvariantReport {
    pub fn max_coeff_abs(&self) -> f64 {
        let q = &self.identities;
        [
            q.g_symmetry.coeff_abs,
            q.fg_intertwining.coeff_abs,
            q.hg_intertwining.coeff_abs,
            q.fh_identity.coeff_abs,
            q.hf_identity.coeff_abs,
            self.f_selfadjoint_defect,
            self.h_selfadjoint_defect,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn max_sample_rel(&self) -> f64 {
        let q = &self.identities;
        [
            q.g_symmetry.sample_rel,
            q.fg_intertwining.sample_rel,
            q.hg_intertwining.sample_rel,
            q.fh_identity.sample_rel,
            q.hf_identity.sample_rel,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn invariant_residuals(s: &FlowState, bs: &BandStructure, z_samples: &[Complex64]) -> InvariantReport {
    let (f, g1, g2, h) = s.pencils();
    let defect = |l: &[CMat]| l.iter().map(linalg::hermitian_defect).fold(0.0, f64::max);
    InvariantReport {
        identities: operator::quadruple_residuals(&f, &g1, &g2, &h, bs, z_samples),
        f_selfadjoint_defect: defect(&s.f),
        h_selfadjoint_defect: defect(&s.h),
    }
}

/// Per-node residuals at the interior nodes of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResiduals {
    pub x: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl NodeResiduals {
    pub fn max(&self) -> f64 {
        exec::max_of(&self.plus).max(exec::max_of(&self.minus))
    }
}

/// `||dM/dx + M^2 - (Q - z)||` with central differences, for `M_+` and `M_-`.
pub fn riccati_residual(traj: &Trajectory, bs: &BandStructure, z: Complex64, mode: ExecMode) -> Result<NodeResiduals> {
    if z.im == 0.0 {
        return Err(Error::at(z));
    }
    if traj.len() < 3 {
        return Err(Error::GridTooCoarse("riccati residual needs at least three nodes".into()));
    }
    let dx = traj.spacing()?;
    let m = traj.states[0].dim();
    let weyl = exec::map(mode, &traj.states, |s| -> Result<(CMat, CMat)> {
        Ok((s.weyl(bs, z, HalfLine::Plus)?, s.weyl(bs, z, HalfLine::Minus)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let interior: Vec<usize> = (1..traj.len() - 1).collect();
    let res = exec::map(mode, &interior, |&i| {
        let q = traj.states[i].potential() - linalg::eye(m) * z;
        let one = |a: &CMat, b: &CMat, mid: &CMat| {
            let d = (b - a) / c(2.0 * dx);
            linalg::max_abs(&(d + mid * mid - &q))
        };
        (
            one(&weyl[i - 1].0, &weyl[i + 1].0, &weyl[i].0),
            one(&weyl[i - 1].1, &weyl[i + 1].1, &weyl[i].1),
        )
    });
    Ok(NodeResiduals {
        x: interior.iter().map(|&i| traj.grid[i]).collect(),
        plus: res.iter().map(|r| r.0).collect(),
        minus: res.iter().map(|r| r.1).collect(),
    })
}

/// `||M_+(lambda + i eps, x) - M_-(lambda - i eps, x)||` at every node.
pub fn reflectionless_check(traj: &Trajectory, bs: &BandStructure, lambda: f64, eps: f64, mode: ExecMode) -> Result<Vec<f64>> {
    if !bs.in_band_interior(lambda) {
        return Err(Error::Validation(format!("lambda = {lambda} is not inside a band")));
    }
    exec::map(mode, &traj.states, |s| -> Result<f64> {
        let up = s.weyl(bs, Complex64::new(lambda, eps), HalfLine::Plus)?;
        let dn = s.weyl(bs, Complex64::new(lambda, -eps), HalfLine::Minus)?;
        Ok(linalg::max_abs(&(up - dn)))
    })
    .into_iter()
    .collect()
}

/// Finite-difference residuals of `G_2' = (-F'' + QF - FQ)/2` (`plus` slot)
/// and `G_2'' = -2F'(Q - z) - FQ' + QG_2 - G_2Q` (`minus` slot), each the
/// max over the coefficientwise residual and the samples.
pub fn lax_residual(traj: &Trajectory, z_samples: &[Complex64], mode: ExecMode) -> Result<NodeResiduals> {
    if traj.len() < 5 {
        return Err(Error::GridTooCoarse("lax residual needs at least five nodes".into()));
    }
    let dx = traj.spacing()?;
    let pencils: Vec<_> = traj.states.iter().map(FlowState::pencils).collect();
    let qs = traj.potentials();
    let m = qs[0].nrows();
    let interior: Vec<usize> = (1..traj.len() - 1).collect();
    let res = exec::map(mode, &interior, |&i| {
        let (fa, _, g2a, _) = &pencils[i - 1];
        let (f, _, g2, _) = &pencils[i];
        let (fb, _, g2b, _) = &pencils[i + 1];
        let scaled = |p: MatrixPencil, k: f64| MatrixPencil::new(p.coeffs().iter().map(|a| a * c(k)).collect()).expect("dims");
        let f1 = scaled(fb.sub(fa), 1.0 / (2.0 * dx));
        let f2 = scaled(fb.sub(f).sub(&f.sub(fa)), 1.0 / (dx * dx));
        let g1d = scaled(g2b.sub(g2a), 1.0 / (2.0 * dx));
        let g2d = scaled(g2b.sub(g2).sub(&g2.sub(g2a)), 1.0 / (dx * dx));
        let q = MatrixPencil::constant(qs[i].clone());
        let q1 = MatrixPencil::constant((&qs[i + 1] - &qs[i - 1]) / c(2.0 * dx));
        let q_minus_z = MatrixPencil::new(vec![qs[i].clone(), -linalg::eye(m)]).expect("dims");
        let first = g1d.sub(&scaled(f2.scale_neg().add(&q.mul(f)).sub(&f.mul(&q)), 0.5));
        let second = g2d.sub(
            &scaled(f1.mul(&q_minus_z), -2.0)
                .sub(&f.mul(&q1))
                .add(&q.mul(g2))
                .sub(&g2.mul(&q)),
        );
        let worst = |p: &MatrixPencil| {
            let coeff = linalg::max_abs_list(p.coeffs());
            z_samples
                .iter()
                .map(|&z| linalg::max_abs(&p.eval(z)) / z.norm().max(1.0).powi(p.degree() as i32))
                .fold(coeff, f64::max)
        };
        (worst(&first), worst(&second))
    });
    Ok(NodeResiduals {
        x: interior.iter().map(|&i| traj.grid[i]).collect(),
        plus: res.iter().map(|r| r.0).collect(),
        minus: res.iter().map(|r| r.1).collect(),
    })
}

impl MatrixPencil {
    fn scale_neg(&self) -> MatrixPencil {
        MatrixPencil::new(self.coeffs().iter().map(|a| -a).collect()).expect("dims")
    }
}

/// Whole-trajectory diagnostics that need no differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    /// Largest distance of a root of `det F` from the gap closures.
    pub max_zone_distance: f64,
    pub max_q_hermitian_defect: f64,
    pub max_q_norm: f64,
    /// `sum |E| + 2 n max |E|`.
    pub q_bound: f64,
}

pub fn diagnostics(traj: &Trajectory, bs: &BandStructure, mode: ExecMode) -> TrajectoryDiagnostics {
    let gaps = bs.gaps();
    let per_node = exec::map(mode, &traj.states, |s| {
        let (f, _, _, _) = s.pencils();
        let distance = f
            .eigenvalues()
            .map(|ev| {
                ev.iter()
                    .map(|z| {
                        let d = gaps.iter().map(|g| (g.lo - z.re).max(z.re - g.hi).max(0.0)).fold(f64::INFINITY, f64::min);
                        d.max(z.im.abs())
                    })
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY);
        let q = s.potential();
        (distance, linalg::hermitian_defect(&q), linalg::norm2(&q))
    });
    let emax = bs.edges().iter().fold(0.0f64, |a, e| a.max(e.abs()));
    TrajectoryDiagnostics {
        max_zone_distance: per_node.iter().map(|p| p.0).fold(0.0, f64::max),
        max_q_hermitian_defect: per_node.iter().map(|p| p.1).fold(0.0, f64::max),
        max_q_norm: per_node.iter().map(|p| p.2).fold(0.0, f64::max),
        q_bound: bs.edges().iter().map(|e| e.abs()).sum::<f64>() + 2.0 * bs.n() as f64 * emax,
    }
}
