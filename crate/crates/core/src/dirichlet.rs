//! Dirichlet data `{mu_k, Gamma_k, eps_k}` of a seed pencil `F`: generation
//! of valid seeds, the Herglotz check, and residue extraction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::band::BandStructure;
use crate::error::{Error, Result};
use crate::linalg::{self, c, serde_mat, CMat, I};
use crate::pencil::MatrixPencil;

/// Relative clustering tolerance for roots of `det F`, scaled by the edge span.
pub const ROOT_CLUSTER_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletDatum {
    pub mu: f64,
    #[serde(with = "serde_mat")]
    pub gamma: CMat,
    pub rank: usize,
    pub epsilon: i8,
    /// Interior gap index `j` (1-based) whose closure holds `mu`.
    pub gap: usize,
    /// `mu` sits on a band edge; `gamma` is then zero.
    pub at_edge: bool,
    /// `||Gamma - Gamma^*||` before symmetrization.
    pub hermitian_defect: f64,
    /// Residual of `i R^{1/2}(mu) Gamma + Gamma F'(mu) Gamma = 0`, relative to `||Gamma||^2 ||F'||`.
    pub residue_identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSet {
    pub data: Vec<DirichletDatum>,
    #[serde(with = "serde_mat")]
    pub gamma0: CMat,
}

impl DirichletSet {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn total_rank(&self) -> usize {
        self.data.iter().map(|d| d.rank).sum()
    }

    /// `S(z) = sum_k eps_k Gamma_k / (z - mu_k)`.
    pub fn weighted_sum(&self, z: Complex64) -> CMat {
        let m = self.gamma0.nrows();
        self.data.iter().fold(linalg::zeros(m), |acc, d| {
            acc + &d.gamma * (c(d.epsilon as f64) / (z - d.mu))
        })
    }

    /// `sum_k Gamma_k / (z - mu_k)` without signs.
    pub fn unsigned_sum(&self, z: Complex64) -> CMat {
        let m = self.gamma0.nrows();
        self.data.iter().fold(linalg::zeros(m), |acc, d| acc + &d.gamma / (z - d.mu))
    }

    /// Sum of `rank(Gamma_k)` per interior gap, index 0 for gap 1.
    pub fn multiplicity_per_gap(&self, n: usize) -> Vec<usize> {
        let mut out = vec![0; n];
        for d in &self.data {
            out[d.gap - 1] += d.rank;
        }
        out
    }
}

/// Diagonal monic seed whose `(r, r)` entry is `prod_j (z - placement[j][r])`.
pub fn default_seed(bs: &BandStructure, m: usize, placement: &[Vec<f64>]) -> Result<MatrixPencil> {
    let diag = diagonal_entries(bs, m, placement)?;
    let n = bs.n();
    let mut coeffs = vec![linalg::zeros(m); n + 1];
    for (r, poly) in diag.iter().enumerate() {
        for (k, &a) in poly.iter().enumerate() {
            coeffs[k][(r, r)] = c(a);
        }
    }
    MatrixPencil::new(coeffs)
}

/// `(D_1(z) + U D_2(z) U^*) / 2` for two diagonal seeds and a unitary `U`.
/// Every scalar section keeps exactly one root per gap, so the seed stays
/// Herglotz while `F(z_1)` and `F(z_2)` need not commute.
pub fn mixed_seed(
    bs: &BandStructure,
    first: &[Vec<f64>],
    second: &[Vec<f64>],
    unitary: &CMat,
) -> Result<MatrixPencil> {
    let m = unitary.nrows();
    let unitarity = linalg::max_abs(&(unitary.adjoint() * unitary - linalg::eye(m)));
    if unitarity > 1e-12 {
        return Err(Error::Validation(format!("mixing matrix is not unitary (defect {unitarity:e})")));
    }
    let d1 = default_seed(bs, m, first)?;
    let d2 = default_seed(bs, m, second)?;
    let coeffs = d1
        .coeffs()
        .iter()
        .zip(d2.coeffs())
        .map(|(a, b)| linalg::hermitize(&((a + unitary * b * unitary.adjoint()) * c(0.5))))
        .collect();
    MatrixPencil::new(coeffs)
}

/// Unitary rotating coordinates `(0, 1)` by `angle` with relative `phase`.
pub fn givens(m: usize, angle: f64, phase: f64) -> CMat {
    let mut u = linalg::eye(m);
    let (s, co) = angle.sin_cos();
    let e = Complex64::from_polar(1.0, phase);
    u[(0, 0)] = c(co);
    u[(0, 1)] = -e.conj() * s;
    u[(1, 0)] = e * s;
    u[(1, 1)] = c(co);
    u
}

fn diagonal_entries(bs: &BandStructure, m: usize, placement: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = bs.n();
    if placement.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: placement.len(),
        });
    }
    for (j, row) in placement.iter().enumerate() {
        if row.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: row.len(),
            });
        }
        let g = bs.gap(j + 1);
        for &v in row {
            if !(v >= g.lo && v <= g.hi) {
                return Err(Error::PlacementOutsideGap {
                    gap: j + 1,
                    value: v,
                    lo: g.lo,
                    hi: g.hi,
                });
            }
        }
    }
    Ok((0..m)
        .map(|r| {
            placement.iter().fold(vec![1.0], |poly, row| {
                let mu = row[r];
                let mut next = vec![0.0; poly.len() + 1];
                for (k, &a) in poly.iter().enumerate() {
                    next[k + 1] += a;
                    next[k] -= mu * a;
                }
                next
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerglotzReport {
    pub pass: bool,
    /// Smallest eigenvalue of `Im((i/2) R^{-1/2} F)` over the samples.
    pub worst_eigenvalue: f64,
    pub worst_at: [f64; 2],
    /// Real roots of `det F` per interior gap.
    pub roots_per_gap: Vec<usize>,
    /// Roots of `det F` not in any gap closure (real parts), or nonreal.
    pub stray_roots: Vec<[f64; 2]>,
    pub message: String,
}

/// Herglotz check of `(i/2) R^{-1/2} F` at the samples plus root location.
pub fn verify_herglotz_seed(f: &MatrixPencil, bs: &BandStructure, samples: &[Complex64], tol: f64) -> HerglotzReport {
    let m = f.dim();
    let mut worst = f64::INFINITY;
    let mut worst_at = [f64::NAN, f64::NAN];
    for &z in samples {
        let g = f.eval(z) * (c(0.5) * I / bs.eval_sqrt_r(z));
        let e = linalg::min_hermitian_eigenvalue(&linalg::im_part(&g));
        if e < worst {
            worst = e;
            worst_at = [z.re, z.im];
        }
    }
    let mut roots_per_gap = vec![0; bs.n()];
    let mut stray = Vec::new();
    let mut message = String::new();
    if !f.is_selfadjoint(1e-12 * f.scale().max(1.0)) {
        message = "seed pencil is not self-adjoint".into();
    }
    let root_tol = ROOT_CLUSTER_TOL * bs.span();
    match f.eigenvalues() {
        Ok(ev) => {
            for z in ev {
                match bs.gap_index(z.re, root_tol) {
                    Some(j) if z.im.abs() <= root_tol => roots_per_gap[j - 1] += 1,
                    _ => stray.push([z.re, z.im]),
                }
            }
        }
        Err(e) => message = e.to_string(),
    }
    let counts_ok = roots_per_gap.iter().all(|&k| k == m);
    let scale = f.scale().max(1.0);
    let positive = worst >= -tol * scale;
    let pass = message.is_empty() && stray.is_empty() && counts_ok && positive;
    if message.is_empty() && !pass {
        message = if !stray.is_empty() {
            format!("roots of det F outside the gap closures: {stray:?}")
        } else if !counts_ok {
            format!("expected {m} roots per gap, found {roots_per_gap:?}")
        } else {
            format!("Im((i/2)R^(-1/2)F) has eigenvalue {worst:e} at {worst_at:?}")
        };
    }
    HerglotzReport {
        pass,
        worst_eigenvalue: worst,
        worst_at,
        roots_per_gap,
        stray_roots: stray,
        message,
    }
}

/// Residues `Gamma_k` of `-i R^{1/2} F^{-1}` at the roots `mu_k` of `det F`
/// and the Hermitian constant `Gamma_0`. `epsilons` is empty (all `+1`) or
/// has one sign per distinct root, in ascending root order.
pub fn extract_dirichlet(f: &MatrixPencil, bs: &BandStructure, epsilons: &[i8]) -> Result<DirichletSet> {
    let m = f.dim();
    if f.degree() != bs.n() || !f.is_monic(1e-12 * f.scale().max(1.0)) {
        return Err(Error::NotHerglotz(format!(
            "seed must be monic of degree {}, got degree {}",
            bs.n(),
            f.degree()
        )));
    }
    if let Some(k) = f.coeffs().iter().position(|a| linalg::hermitian_defect(a) > 1e-12 * f.scale().max(1.0)) {
        return Err(Error::NonSelfAdjoint(k));
    }
    let span = bs.span();
    let roots = f.det_roots_within(ROOT_CLUSTER_TOL * span)?;
    if !epsilons.is_empty() && epsilons.len() != roots.len() {
        return Err(Error::WrongSignCount {
            expected: roots.len(),
            got: epsilons.len(),
        });
    }
    if let Some(&bad) = epsilons.iter().find(|&&e| e != 1 && e != -1) {
        return Err(Error::Validation(format!("epsilon must be +1 or -1, got {bad}")));
    }
    let fprime = f.derivative();
    let scale = f.scale().max(1.0);
    let edge_tol = 1e-12 * span.max(1.0);

    let mut data = Vec::with_capacity(roots.len());
    for (k, &(root, mult)) in roots.iter().enumerate() {
        let epsilon = epsilons.get(k).copied().unwrap_or(1);
        if root.im.abs() > ROOT_CLUSTER_TOL * span {
            return Err(Error::NotHerglotz(format!("nonreal root {root} of det F")));
        }
        let mu = root.re;
        let gap = bs
            .gap_index(mu, ROOT_CLUSTER_TOL * span)
            .ok_or_else(|| Error::NotHerglotz(format!("root {mu} of det F is not in a gap closure")))?;
        let at_edge = bs.edges().iter().any(|&e| (e - mu).abs() <= edge_tol);
        let z = c(mu);
        let fz = f.eval(z);
        let (v, sing) = linalg::near_nullspace(&fz, mult);
        if sing.iter().any(|&s| s > 1e-6 * scale) {
            return Err(Error::DefectiveRoot(mu));
        }
        let fp = fprime.eval(z);
        if at_edge {
            data.push(DirichletDatum {
                mu,
                gamma: linalg::zeros(m),
                rank: 0,
                epsilon,
                gap,
                at_edge,
                hermitian_defect: 0.0,
                residue_identity: 0.0,
            });
            continue;
        }
        // F is self-adjoint on the real axis, so left and right null spaces coincide.
        let inner = v.adjoint() * &fp * &v;
        let inner_inv = match linalg::inverse(&inner) {
            Some(x) if linalg::condition_number(&inner) < 1e10 => x,
            _ => return Err(Error::DefectiveRoot(mu)),
        };
        let sqrt_r = bs.eval_sqrt_r(z);
        let raw = &v * inner_inv * v.adjoint() * (-I * sqrt_r);
        let gnorm = linalg::max_abs(&raw).max(f64::MIN_POSITIVE);
        let hermitian_defect = linalg::hermitian_defect(&raw) / gnorm;
        let gamma = linalg::hermitize(&raw);
        let min_eig = linalg::min_hermitian_eigenvalue(&gamma);
        if min_eig < -1e-8 * gnorm {
            return Err(Error::NegativeGamma { mu, min_eig });
        }
        let ident = &gamma * (I * sqrt_r) + &gamma * &fp * &gamma;
        let residue_identity = linalg::max_abs(&ident) / (gnorm * gnorm * linalg::max_abs(&fp).max(1.0)).max(gnorm);
        let rank = linalg::numerical_rank(&gamma, 1e-8, 0.0);
        data.push(DirichletDatum {
            mu,
            gamma,
            rank,
            epsilon,
            gap,
            at_edge,
            hermitian_defect,
            residue_identity,
        });
    }

    let mut set = DirichletSet {
        data,
        gamma0: linalg::zeros(m),
    };
    set.gamma0 = herglotz_constant(f, bs, &set)?;
    Ok(set)
}

/// `Re(i R^{1/2}(i) F(i)^{-1} + sum_k Gamma_k / (i - mu_k))`: the constant
/// of the normalized Herglotz representation, where the integral term is
/// purely imaginary.
fn herglotz_constant(f: &MatrixPencil, bs: &BandStructure, set: &DirichletSet) -> Result<CMat> {
    let z = I;
    let finv = linalg::inverse(&f.eval(z)).ok_or_else(|| Error::at(z))?;
    let total = finv * (I * bs.eval_sqrt_r(z)) + set.unsigned_sum(z);
    Ok(linalg::re_part(&total))
}

/// `i R^{1/2} F^{-1} + sum_k Gamma_k/(z - mu_k) - Gamma_0`, Herglotz by construction.
pub fn reconstruction_remainder(f: &MatrixPencil, bs: &BandStructure, set: &DirichletSet, z: Complex64) -> Result<CMat> {
    let finv = linalg::inverse(&f.eval(z)).ok_or_else(|| Error::at(z))?;
    Ok(finv * (I * bs.eval_sqrt_r(z)) + set.unsigned_sum(z) - &set.gamma0)
}

/// 5x5 grid in the upper half-plane, radii geometric in `[0.1, 10] * span`.
pub fn upper_half_plane_grid(bs: &BandStructure) -> Vec<Complex64> {
    let span = bs.span();
    let mut out = Vec::with_capacity(25);
    for a in 0..5 {
        let r = 0.1 * span * 100f64.powf(a as f64 / 4.0);
        for b in 0..5 {
            let theta = std::f64::consts::PI * (b as f64 + 0.5) / 5.0;
            out.push(Complex64::from_polar(r, theta));
        }
    }
    out
}
