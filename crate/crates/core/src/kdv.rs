//! KdV expansion coefficients by three routes, trace formulas for the
//! factorized pencils, the stationary KdV residual and the non-Abelian probe.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::band::{BandStructure, EdgeSeries};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::flow::{FlowState, Trajectory};
use crate::linalg::{self, c, serde_mat_list, CMat, I};
use crate::pencil::MatrixPencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Linear maps of the pencil coefficients, extended past the pencil
    /// degree by the vanishing convolution with `c_k`.
    Pencil,
    /// Closed differential polynomials in `Q` with central differences.
    Explicit,
    /// Inversion of the large-`z` expansion of `M_- - M_+`.
    MExpansion,
}

/// Expansion coefficients at one node. `ghat*[0] = 0`, and `ghat*[j]` is the
/// coefficient of `z^{-j-1/2}` in `G_p / R^{1/2}` (one step above the
/// coefficient of `z^{-j+1/2}` in `F / R^{1/2}`, which is `rhat[j]`).
/// Routes that do not produce a family leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSeries {
    pub x: f64,
    pub route: Route,
    #[serde(with = "serde_mat_list")]
    pub rhat: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub ghat1: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub ghat2: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub hhat: Vec<CMat>,
}

impl InvariantSeries {
    pub fn order(&self) -> usize {
        self.rhat.len().saturating_sub(1)
    }

    /// Max entry difference over the `rhat` indices both routes carry, up to `upto`.
    pub fn rhat_distance(&self, other: &InvariantSeries, upto: usize) -> f64 {
        (1..=upto.min(self.order()).min(other.order()))
            .map(|k| linalg::max_abs(&(&self.rhat[k] - &other.rhat[k])))
            .fold(0.0, f64::max)
    }
}

fn convolve(chat: &[f64], coeffs: &[CMat], upto: usize, m: usize) -> CMat {
    let mut acc = linalg::zeros(m);
    for (k, a) in coeffs.iter().enumerate().take(upto + 1) {
        acc += a * c(chat[upto - k]);
    }
    acc
}

/// Pencil route to order `k_max`; `es` must reach `k_max`.
pub fn series_from_state(s: &FlowState, es: &EdgeSeries, k_max: usize) -> Result<InvariantSeries> {
    if es.order() < k_max {
        return Err(Error::Validation(format!(
            "edge series of order {} cannot support expansion order {k_max}",
            es.order()
        )));
    }
    let n = s.n();
    let m = s.dim();
    let mut rhat = Vec::with_capacity(k_max + 1);
    for l in 0..=k_max {
        if l <= n {
            rhat.push(convolve(&es.chat, &s.f, l, m));
        } else {
            let mut acc = linalg::zeros(m);
            for (j, r) in rhat.iter().enumerate() {
                acc -= r * c(es.c[l - j]);
            }
            rhat.push(acc);
        }
    }
    let mut hhat = Vec::with_capacity(k_max + 1);
    for l in 0..=k_max {
        if l <= n + 1 {
            hhat.push(convolve(&es.chat, &s.h, l, m));
        } else {
            let mut acc = linalg::zeros(m);
            for (j, r) in hhat.iter().enumerate() {
                acc -= r * c(es.c[l - j]);
            }
            hhat.push(acc);
        }
    }
    let ghat = |g: &[CMat]| -> Vec<CMat> {
        let mut out = vec![linalg::zeros(m)];
        out.extend((0..k_max).map(|l| convolve(&es.chat, g, l, m)));
        out
    };
    Ok(InvariantSeries {
        x: s.x,
        route: Route::Pencil,
        rhat,
        ghat1: ghat(&s.g1),
        ghat2: ghat(&s.g2),
        hhat,
    })
}

/// Max difference between the extension (used by `series_from_state`) and the
/// direct convolution with `ĉ`, over orders past the pencil degrees.
pub fn extension_defect(s: &FlowState, series: &InvariantSeries, es: &EdgeSeries) -> f64 {
    let m = s.dim();
    let n = s.n();
    let k_max = series.order();
    let r = (n + 1..=k_max).map(|l| linalg::max_abs(&(convolve(&es.chat, &s.f, l, m) - &series.rhat[l])));
    let h = (n + 2..=k_max).map(|l| linalg::max_abs(&(convolve(&es.chat, &s.h, l, m) - &series.hhat[l])));
    r.chain(h).fold(0.0, f64::max)
}

/// Central-difference derivatives of a uniformly sampled matrix function.
struct Diff<'a> {
    q: &'a [CMat],
    dx: f64,
}

impl Diff<'_> {
    fn d1(&self, i: usize) -> CMat {
        (&self.q[i + 1] - &self.q[i - 1]) / c(2.0 * self.dx)
    }
    fn d2(&self, i: usize) -> CMat {
        (&self.q[i + 1] - &self.q[i] * c(2.0) + &self.q[i - 1]) / c(self.dx * self.dx)
    }
    fn d3(&self, i: usize) -> CMat {
        (&self.q[i + 2] - &self.q[i + 1] * c(2.0) + &self.q[i - 1] * c(2.0) - &self.q[i - 2])
            / c(2.0 * self.dx.powi(3))
    }
}

/// Explicit low-order route at nodes `2..len-2` of a uniform grid.
pub fn explicit_low_order(grid: &[f64], qs: &[CMat]) -> Result<Vec<InvariantSeries>> {
    if qs.len() < 5 || grid.len() != qs.len() {
        return Err(Error::GridTooCoarse("explicit route needs at least five nodes".into()));
    }
    let dx = crate::flow::uniform_spacing(grid)?;
    let d = Diff { q: qs, dx };
    let m = qs[0].nrows();
    let eye = linalg::eye(m);
    Ok((2..qs.len() - 2)
        .map(|i| {
            let q = &qs[i];
            let (q1, q2, q3) = (d.d1(i), d.d2(i), d.d3(i));
            let q_sq = q * q;
            let q_sq_1 = &q1 * q + q * &q1;
            let r1 = q * c(0.5);
            let r2 = &q2 * c(-0.125) + &q_sq * c(0.375);
            let g0 = &q1 * c(-0.25);
            let g1 = &q3 * c(1.0 / 16.0) - &q_sq_1 * c(0.125) - (&q1 * q) * c(0.125);
            let g2 = &q3 * c(1.0 / 16.0) - &q_sq_1 * c(0.125) - (q * &q1) * c(0.125);
            let h1 = q * c(-0.5);
            let h2 = &q2 * c(0.125) - &q_sq * c(0.125);
            InvariantSeries {
                x: grid[i],
                route: Route::Explicit,
                rhat: vec![eye.clone(), r1, r2],
                ghat1: vec![linalg::zeros(m), g0.clone(), g1],
                ghat2: vec![linalg::zeros(m), g0, g2],
                hhat: vec![eye.clone(), h1, h2],
            }
        })
        .collect())
}

/// `M_{+,k}` and `M_{-,k}`, `k = 1..=K`, at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCoefficients {
    pub x: f64,
    #[serde(with = "serde_mat_list")]
    pub plus: Vec<CMat>,
    #[serde(with = "serde_mat_list")]
    pub minus: Vec<CMat>,
}

/// Large-`z` coefficients of `M_pm = ±i z^{1/2} + sum_k M_{pm,k} z^{-k/2}`
/// from the Riccati recursion; defined at nodes `K-1..len-K+1`.
pub fn m_expansion_recursion(grid: &[f64], qs: &[CMat], k_max: usize) -> Result<Vec<MCoefficients>> {
    if k_max == 0 {
        return Err(Error::Validation("expansion order must be positive".into()));
    }
    if qs.len() < 2 * k_max - 1 || grid.len() != qs.len() {
        return Err(Error::GridTooCoarse(format!(
            "order {k_max} needs at least {} nodes",
            2 * k_max - 1
        )));
    }
    let dx = if qs.len() > 1 { crate::flow::uniform_spacing(grid)? } else { 1.0 };
    let len = qs.len();
    let side = |sign: f64| -> Vec<Vec<Option<CMat>>> {
        let mut levels: Vec<Vec<Option<CMat>>> = vec![qs.iter().map(|q| Some(q * (I * (-sign * 0.5)))).collect()];
        for k in 1..k_max {
            let next = (0..len)
                .map(|i| {
                    if i == 0 || i + 1 == len {
                        return None;
                    }
                    let prime = match (&levels[k - 1][i + 1], &levels[k - 1][i - 1]) {
                        (Some(a), Some(b)) => (a - b) / c(2.0 * dx),
                        _ => return None,
                    };
                    let mut acc = prime;
                    for l in 1..k {
                        acc += levels[l - 1][i].as_ref()? * levels[k - l - 1][i].as_ref()?;
                    }
                    Some(acc * (I * (sign * 0.5)))
                })
                .collect();
            levels.push(next);
        }
        levels
    };
    let plus = side(1.0);
    let minus = side(-1.0);
    Ok((0..len)
        .filter_map(|i| {
            let p: Option<Vec<CMat>> = plus.iter().map(|lvl| lvl[i].clone()).collect();
            let q: Option<Vec<CMat>> = minus.iter().map(|lvl| lvl[i].clone()).collect();
            Some(MCoefficients {
                x: grid[i],
                plus: p?,
                minus: q?,
            })
        })
        .collect())
}

/// `R̂_0..R̂_J` from `(M_- - M_+)^{-1} = (i/2) w [I + sum_k D_k w^{k+1}]^{-1}`,
/// `w = z^{-1/2}`, `D_k = (M_{-,k} - M_{+,k}) / (-2i)`; needs `K >= 2J - 1`.
pub fn rhat_from_m(mc: &MCoefficients, j_max: usize) -> Result<InvariantSeries> {
    let k_have = mc.plus.len();
    if j_max > 0 && k_have < 2 * j_max - 1 {
        return Err(Error::Validation(format!(
            "order {j_max} needs {} M coefficients, got {k_have}",
            2 * j_max - 1
        )));
    }
    let m = mc.plus[0].nrows();
    let top = 2 * j_max;
    // a_0 = I, a_{k+1} = D_k
    let mut a = vec![linalg::eye(m), linalg::zeros(m)];
    for k in 1..top {
        a.push((&mc.minus[k - 1] - &mc.plus[k - 1]) / (I * -2.0));
    }
    let mut b = vec![linalg::eye(m)];
    for j in 1..=top {
        let mut acc = linalg::zeros(m);
        for i in 1..=j {
            acc -= &a[i] * &b[j - i];
        }
        b.push(acc);
    }
    Ok(InvariantSeries {
        x: mc.x,
        route: Route::MExpansion,
        rhat: (0..=j_max).map(|j| b[2 * j].clone()).collect(),
        ghat1: vec![],
        ghat2: vec![],
        hhat: vec![],
    })
}

/// Factor roots and trace-formula residuals at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub x: f64,
    /// `F = (z - U_n) ... (z - U_1)`.
    #[serde(with = "serde_mat_list")]
    pub u: Vec<CMat>,
    /// `H = (z - V_n) ... (z - V_0)`.
    #[serde(with = "serde_mat_list")]
    pub v: Vec<CMat>,
    /// `k = 1..=n`: `(-1)^k e_k(U) - sum_l c_{k-l} R̂_l`, block products descending.
    pub f_residuals: Vec<f64>,
    /// Same with ascending block products; informational only.
    pub f_residuals_reversed: Vec<f64>,
    /// `k = 1..=n+1`: `(-1)^k e_k(V) - sum_l c_{k-l} Ĥ_l`.
    pub h_residuals: Vec<f64>,
    pub h_residuals_reversed: Vec<f64>,
    /// `sum_l c_{k-l} R̂_l` for `n < k <= K` and the `Ĥ` analogue past `n+1`.
    pub extension_residual: f64,
    /// `Q - (sum E) I + 2 sum U_j`.
    pub q_from_u: f64,
    /// `Q + (sum E) I - 2 sum V_k`.
    pub q_from_v: f64,
    /// Largest distance of a root spectrum from its zone (0 when confined).
    pub zone_violation: f64,
}

impl TraceReport {
    pub fn max_residual(&self) -> f64 {
        self.f_residuals
            .iter()
            .chain(&self.h_residuals)
            .copied()
            .chain([self.extension_residual, self.q_from_u, self.q_from_v])
            .fold(0.0, f64::max)
    }
}

/// `sum over j_1 < .. < j_k` of the ordered block products.
fn elementary(roots: &[CMat], k: usize, descending: bool) -> CMat {
    let m = roots[0].nrows();
    let n = roots.len();
    let mut acc = linalg::zeros(m);
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut prod = linalg::eye(m);
        for j in 0..n {
            if mask & (1 << j) != 0 {
                prod = if descending { &roots[j] * prod } else { prod * &roots[j] };
            }
        }
        acc += prod;
    }
    acc
}

fn zone_distance(root: &CMat, lo: f64, hi: f64) -> Result<f64> {
    let ev = MatrixPencil::linear(root).eigenvalues()?;
    Ok(ev
        .iter()
        .map(|z| z.im.abs().max(lo - z.re).max(z.re - hi).max(0.0))
        .fold(0.0, f64::max))
}

pub fn trace_formulas(s: &FlowState, bs: &BandStructure, es: &EdgeSeries) -> Result<TraceReport> {
    let n = s.n();
    if n > 20 {
        return Err(Error::Validation("trace formulas enumerate subsets; degree too large".into()));
    }
    let k_max = es.order();
    if k_max < n + 1 {
        return Err(Error::Validation(format!("edge series must reach order {}", n + 1)));
    }
    let series = series_from_state(s, es, k_max)?;
    let (f, _, _, h) = s.pencils();
    let u = f.factorize()?;
    let v = h.factorize()?;
    let m = s.dim();
    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let target = |list: &[CMat], k: usize| convolve(&es.c, list, k, m);
    let resid = |roots: &[CMat], list: &[CMat], k: usize, desc: bool| {
        linalg::max_abs(&(elementary(roots, k, desc) * c(sign(k)) - target(list, k)))
    };
    let f_residuals = (1..=n).map(|k| resid(&u, &series.rhat, k, true)).collect();
    let f_residuals_reversed = (1..=n).map(|k| resid(&u, &series.rhat, k, false)).collect();
    let h_residuals = (1..=n + 1).map(|k| resid(&v, &series.hhat, k, true)).collect();
    let h_residuals_reversed = (1..=n + 1).map(|k| resid(&v, &series.hhat, k, false)).collect();
    let extension_residual = (n + 1..=k_max)
        .map(|k| linalg::max_abs(&target(&series.rhat, k)))
        .chain((n + 2..=k_max).map(|k| linalg::max_abs(&target(&series.hhat, k))))
        .fold(0.0, f64::max);
    let q = s.potential();
    let eye = linalg::eye(m);
    let sum_e = bs.edge_sum();
    let sum_u = u.iter().fold(linalg::zeros(m), |a, b| a + b);
    let sum_v = v.iter().fold(linalg::zeros(m), |a, b| a + b);
    let q_from_u = linalg::max_abs(&(&q - &eye * c(sum_e) + &sum_u * c(2.0)));
    let q_from_v = linalg::max_abs(&(&q + &eye * c(sum_e) - &sum_v * c(2.0)));
    let gaps = bs.gaps();
    let mut zone_violation = zone_distance(&v[0], f64::NEG_INFINITY, bs.edges()[0])?;
    for j in 0..n {
        zone_violation = zone_violation
            .max(zone_distance(&u[j], gaps[j].lo, gaps[j].hi)?)
            .max(zone_distance(&v[j + 1], gaps[j].lo, gaps[j].hi)?);
    }
    Ok(TraceReport {
        x: s.x,
        u,
        v,
        f_residuals,
        f_residuals_reversed,
        h_residuals,
        h_residuals_reversed,
        extension_residual,
        q_from_u,
        q_from_v,
        zone_violation,
    })
}

/// Per-node norms of `-2 sum_{l=0}^n c_{n-l} R̂'_{l+1}` at interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkdvReport {
    pub x: Vec<f64>,
    /// `R̂'_{n+1}` from the Lax recursion
    /// `R̂'_{j+1} = (Ĝ''_{2} + 2 R̂'_j Q + R̂_j Q' + Ĝ_2 Q - Q Ĝ_2) / 2`
    /// with `Ĝ_2 = ghat2[j]`; the lower orders by central differences.
    pub lax: Vec<f64>,
    /// Every `R̂'` by central differences of the pencil-route series. The
    /// extension makes this sum constant, so it only measures rounding.
    pub series: Vec<f64>,
}

impl SkdvReport {
    pub fn max_lax(&self) -> f64 {
        exec::max_of(&self.lax)
    }

    pub fn max_series(&self) -> f64 {
        exec::max_of(&self.series)
    }
}

pub fn skdv_residual(traj: &Trajectory, es: &EdgeSeries, mode: ExecMode) -> Result<SkdvReport> {
    if traj.len() < 3 {
        return Err(Error::GridTooCoarse("stationary KdV needs at least three nodes".into()));
    }
    let dx = traj.spacing()?;
    let n = traj.states[0].n();
    let series = exec::map(mode, &traj.states, |s| series_from_state(s, es, n + 1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let qs = traj.potentials();
    let interior: Vec<usize> = (1..traj.len() - 1).collect();
    let out = exec::map(mode, &interior, |&i| {
        let d = |f: &dyn Fn(&InvariantSeries) -> &CMat| (f(&series[i + 1]) - f(&series[i - 1])) / c(2.0 * dx);
        let dd = |f: &dyn Fn(&InvariantSeries) -> &CMat| {
            (f(&series[i + 1]) - f(&series[i]) * c(2.0) + f(&series[i - 1])) / c(dx * dx)
        };
        let m = qs[i].nrows();
        let mut low = linalg::zeros(m);
        for l in 0..n {
            low += d(&|s| &s.rhat[l + 1]) * c(es.c[n - l]);
        }
        let q = &qs[i];
        let q1 = (&qs[i + 1] - &qs[i - 1]) / c(2.0 * dx);
        let here = &series[i];
        let rn1 = d(&|s| &s.rhat[n]);
        let g = &here.ghat2[n];
        let top_lax = (dd(&|s| &s.ghat2[n]) + &rn1 * q * c(2.0) + &here.rhat[n] * &q1 + g * q - q * g) * c(0.5);
        let top_series = d(&|s| &s.rhat[n + 1]);
        (
            linalg::max_abs(&((&low + top_lax) * c(-2.0))),
            linalg::max_abs(&((low + top_series) * c(-2.0))),
        )
    });
    Ok(SkdvReport {
        x: interior.iter().map(|&i| traj.grid[i]).collect(),
        lax: out.iter().map(|r| r.0).collect(),
        series: out.iter().map(|r| r.1).collect(),
    })
}

/// `-2 (c_1 Q'/2 + (-Q''/8 + 3Q^2/8)')` at nodes `2..len-2`: the `n = 1`
/// stationary KdV equation written out in `Q`.
pub fn skdv_explicit_n1(grid: &[f64], qs: &[CMat], c1: f64) -> Result<Vec<f64>> {
    if qs.len() < 5 {
        return Err(Error::GridTooCoarse("explicit stationary KdV needs five nodes".into()));
    }
    let dx = crate::flow::uniform_spacing(grid)?;
    let d = Diff { q: qs, dx };
    Ok((2..qs.len() - 2)
        .map(|i| {
            let q1 = d.d1(i);
            let q_sq_1 = &q1 * &qs[i] + &qs[i] * &q1;
            let r = &q1 * c(0.5 * c1) - d.d3(i) * c(0.125) + q_sq_1 * c(0.375);
            linalg::max_abs(&(r * c(-2.0)))
        })
        .collect())
}

/// `||F(z_1) F(z_2) - F(z_2) F(z_1)||`; zero whenever `Q` is a constant
/// unitary conjugate of a diagonal family.
pub fn nonabelian_probe(f: &MatrixPencil, z1: Complex64, z2: Complex64) -> f64 {
    let a = f.eval(z1);
    let b = f.eval(z2);
    linalg::norm2(&(&a * &b - &b * &a))
}
