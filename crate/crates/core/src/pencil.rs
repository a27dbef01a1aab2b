//! Polynomial matrix pencils `A(z) = sum_k A_k z^k` with complex `m x m`
//! coefficients: evaluation, arithmetic, root zones, hyperbolicity,
//! spectral roots and monic factorization.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::band::Interval;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::linalg::{self, c, CMat};

/// Eigenbasis condition number above which spectral roots are rejected.
pub const EIGENBASIS_COND_LIMIT: f64 = 1e8;

/// Coefficients stored by ascending power; `coeffs.len() == degree + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPencil {
    m: usize,
    #[serde(with = "linalg::serde_mat_list")]
    coeffs: Vec<CMat>,
}

impl MatrixPencil {
    pub fn new(coeffs: Vec<CMat>) -> Result<Self> {
        let m = coeffs.first().map(|a| a.nrows()).ok_or(Error::DimensionMismatch { expected: 1, got: 0 })?;
        for a in &coeffs {
            if a.nrows() != m || a.ncols() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: a.nrows().max(a.ncols()),
                });
            }
        }
        Ok(MatrixPencil { m, coeffs })
    }

    /// `zI - a`.
    pub fn linear(a: &CMat) -> Self {
        let m = a.nrows();
        MatrixPencil {
            m,
            coeffs: vec![-a.clone(), linalg::eye(m)],
        }
    }

    pub fn constant(a: CMat) -> Self {
        MatrixPencil {
            m: a.nrows(),
            coeffs: vec![a],
        }
    }

    pub fn zero(m: usize) -> Self {
        Self::constant(linalg::zeros(m))
    }

    /// Scalar polynomial `p(z) I_m` from real ascending coefficients.
    pub fn scalar(m: usize, coeffs: &[f64]) -> Self {
        MatrixPencil {
            m,
            coeffs: coeffs.iter().map(|&v| linalg::eye(m) * c(v)).collect(),
        }
    }

    /// `(zI - Y_d) ... (zI - Y_1)` for factors listed as `[Y_1, .., Y_d]`.
    pub fn from_right_factors(factors: &[CMat]) -> Self {
        let m = factors[0].nrows();
        factors
            .iter()
            .fold(Self::scalar(m, &[1.0]), |acc, y| Self::linear(y).mul(&acc))
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Formal degree (number of stored coefficients minus one).
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    pub fn coeff(&self, power: usize) -> CMat {
        self.coeffs.get(power).cloned().unwrap_or_else(|| linalg::zeros(self.m))
    }

    /// Complementary indexing `A(z) = sum_l A_{[d-l]} z^l`: `top(0)` is the leading coefficient.
    pub fn top(&self, k: usize) -> CMat {
        let d = self.degree();
        if k > d {
            linalg::zeros(self.m)
        } else {
            self.coeffs[d - k].clone()
        }
    }

    pub fn leading(&self) -> &CMat {
        &self.coeffs[self.degree()]
    }

    /// Largest coefficient max-entry norm.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    pub fn is_monic(&self, tol: f64) -> bool {
        linalg::max_abs(&(self.leading() - linalg::eye(self.m))) <= tol
    }

    pub fn is_selfadjoint(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|a| linalg::hermitian_defect(a) <= tol)
    }

    pub fn eval(&self, z: Complex64) -> CMat {
        let mut acc = self.leading().clone();
        for a in self.coeffs.iter().rev().skip(1) {
            acc = acc * z + a;
        }
        acc
    }

    pub fn eval_derivative(&self, z: Complex64) -> CMat {
        self.derivative().eval(z)
    }

    /// Right substitution `sum_k A_k Z^k`.
    pub fn eval_at_matrix(&self, z: &CMat) -> Result<CMat> {
        if z.nrows() != self.m || z.ncols() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: z.nrows().max(z.ncols()),
            });
        }
        let mut acc = self.leading().clone();
        for a in self.coeffs.iter().rev().skip(1) {
            acc = &acc * z + a;
        }
        Ok(acc)
    }

    pub fn derivative(&self) -> Self {
        if self.degree() == 0 {
            return Self::zero(self.m);
        }
        MatrixPencil {
            m: self.m,
            coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, a)| a * c(k as f64)).collect(),
        }
    }

    /// Coefficientwise adjoint, so that `result(z) = self(conj z)^*`.
    pub fn adjoint(&self) -> Self {
        MatrixPencil {
            m: self.m,
            coeffs: self.coeffs.iter().map(|a| a.adjoint()).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut coeffs = vec![linalg::zeros(self.m); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        MatrixPencil { m: self.m, coeffs }
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        MatrixPencil {
            m: self.m,
            coeffs: (0..len).map(|k| self.coeff(k) + other.coeff(k)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        MatrixPencil {
            m: self.m,
            coeffs: (0..len).map(|k| self.coeff(k) - other.coeff(k)).collect(),
        }
    }

    /// Drops leading coefficients whose max-entry norm is `<= tol`.
    pub fn trimmed(mut self, tol: f64) -> Self {
        while self.coeffs.len() > 1 && linalg::max_abs(self.leading()) <= tol {
            self.coeffs.pop();
        }
        self
    }

    /// Hermitian parts of all coefficients.
    pub fn hermitized(&self) -> Self {
        MatrixPencil {
            m: self.m,
            coeffs: self.coeffs.iter().map(linalg::hermitize).collect(),
        }
    }

    /// Largest max-entry norm of coefficient differences.
    pub fn distance(&self, other: &Self) -> f64 {
        linalg::max_abs_list(&self.sub(other).coeffs)
    }

    /// Block companion of the monicized pencil, size `dm`.
    fn companion(&self) -> Result<CMat> {
        let d = self.degree();
        let m = self.m;
        let lead_inv = linalg::inverse(self.leading()).ok_or(Error::SingularLeadingCoefficient)?;
        if linalg::condition_number(self.leading()) > 1e12 {
            return Err(Error::SingularLeadingCoefficient);
        }
        let mut comp = CMat::zeros(d * m, d * m);
        for b in 0..d.saturating_sub(1) {
            for r in 0..m {
                comp[(b * m + r, (b + 1) * m + r)] = c(1.0);
            }
        }
        for k in 0..d {
            let blk = -(&lead_inv * &self.coeffs[k]);
            comp.view_mut(((d - 1) * m, k * m), (m, m)).copy_from(&blk);
        }
        Ok(comp)
    }

    /// All `dm` roots of `det A(z)`, unclustered.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        if self.degree() == 0 {
            return Ok(Vec::new());
        }
        let comp = self.companion()?;
        let ev = comp.schur().eigenvalues().ok_or(Error::EigenFailure)?;
        let mut out: Vec<Complex64> = ev.iter().copied().collect();
        out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(out)
    }

    /// Roots of `det A(z)` grouped into multiplicity clusters; two roots join
    /// a cluster when closer than `rel_tol * max(1, spread)`.
    pub fn det_roots(&self, rel_tol: f64) -> Result<Vec<(Complex64, usize)>> {
        let ev = self.eigenvalues()?;
        let spread = ev.iter().map(|z| z.norm()).fold(1.0, f64::max);
        Ok(cluster(&ev, rel_tol * spread))
    }

    /// Roots of `det A(z)` clustered at absolute distance `tol`.
    pub fn det_roots_within(&self, tol: f64) -> Result<Vec<(Complex64, usize)>> {
        Ok(cluster(&self.eigenvalues()?, tol))
    }

    /// Sampled root zones.
    pub fn root_zones(&self, probes: usize, rng_seed: u64) -> Result<RootZoneReport> {
        self.root_zones_with(probes, rng_seed, ExecMode::default())
    }

    pub fn root_zones_with(&self, probes: usize, rng_seed: u64, mode: ExecMode) -> Result<RootZoneReport> {
        let m = self.m;
        let d = self.degree();
        let sa_tol = 1e-10 * self.scale().max(1.0);
        if let Some(k) = self.coeffs.iter().position(|a| linalg::hermitian_defect(a) > sa_tol) {
            return Err(Error::NonSelfAdjoint(k));
        }
        let lead_min = linalg::min_hermitian_eigenvalue(self.leading());
        if lead_min <= 0.0 {
            return Err(Error::IndefiniteLeading(lead_min));
        }

        let mut vectors = Vec::with_capacity(probes + (d + 1) * m);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for _ in 0..probes {
            let mut v: Vec<Complex64> = (0..m)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|z| *z /= norm);
            vectors.push(v);
        }
        for a in &self.coeffs {
            let (_, vecs) = linalg::hermitian_eigen(a);
            for col in vecs.column_iter() {
                vectors.push(col.iter().copied().collect());
            }
        }

        let roots = exec::map(mode, &vectors, |f| {
            let coeffs: Vec<f64> = self
                .coeffs
                .iter()
                .map(|a| {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i in 0..m {
                        for j in 0..m {
                            s += f[i].conj() * a[(i, j)] * f[j];
                        }
                    }
                    s.re
                })
                .collect();
            scalar_roots(&coeffs)
        });

        let scale = self.scale().max(1.0);
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut nonreal = false;
        let mut coincident = false;
        for r in &roots {
            let r = r.as_ref().map_err(|_| Error::EigenFailure)?;
            let mut re: Vec<f64> = Vec::with_capacity(d);
            for z in r {
                if z.im.abs() > 1e-7 * scale.max(z.norm()) {
                    nonreal = true;
                }
                re.push(z.re);
            }
            re.sort_by(f64::total_cmp);
            for (j, &x) in re.iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
            if re.windows(2).any(|w| w[1] - w[0] <= 1e-9 * scale) {
                coincident = true;
            }
        }
        let zones: Vec<Interval> = lo.iter().zip(&hi).map(|(&lo, &hi)| Interval { lo, hi }).collect();
        let separated = zones.windows(2).all(|w| w[0].hi < w[1].lo);
        let hyperbolicity = if nonreal {
            Hyperbolicity::NotWeakly
        } else if coincident {
            Hyperbolicity::Weakly
        } else if !separated {
            Hyperbolicity::Hyperbolic
        } else {
            Hyperbolicity::Strongly
        };
        let separators: Vec<f64> = if separated {
            zones.windows(2).map(|w| 0.5 * (w[0].hi + w[1].lo)).collect()
        } else {
            Vec::new()
        };
        let signs = if separated {
            self.strong_hyperbolicity_margins(&separators)?
        } else {
            Vec::new()
        };
        Ok(RootZoneReport {
            zones,
            hyperbolicity,
            separators,
            separator_margins: signs,
            probes: vectors.len(),
        })
    }

    /// Smallest eigenvalue of `(-1)^j A(gamma_j)` for each separator.
    pub fn strong_hyperbolicity_margins(&self, separators: &[f64]) -> Result<Vec<f64>> {
        let d = self.degree();
        if separators.len() != d.saturating_sub(1) {
            return Err(Error::WrongSeparatorCount {
                expected: d.saturating_sub(1),
                got: separators.len(),
            });
        }
        Ok(separators
            .iter()
            .enumerate()
            .map(|(idx, &g)| {
                let j = idx + 1;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                linalg::min_hermitian_eigenvalue(&(self.eval(c(g)) * c(sign)))
            })
            .collect())
    }

    /// True iff `(-1)^j A(gamma_j) > 0` for every separator.
    pub fn check_strong_hyperbolicity(&self, separators: &[f64]) -> Result<(bool, Vec<f64>)> {
        if !separators.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::WrongSeparatorCount {
                expected: self.degree().saturating_sub(1),
                got: separators.len(),
            });
        }
        let margins = self.strong_hyperbolicity_margins(separators)?;
        Ok((margins.iter().all(|&v| v > 0.0), margins))
    }

    /// Spectral root carrying the `m` eigenvalues of the pencil inside `zone`
    /// (closed, widened by `tol`).
    pub fn spectral_root(&self, zone: Interval, tol: f64) -> Result<CMat> {
        let ev = self.eigenvalues()?;
        let picked: Vec<Complex64> = ev
            .into_iter()
            .filter(|z| zone.contains_closed(z.re, tol) && z.im.abs() <= tol.max(1e-8))
            .collect();
        if picked.len() != self.m {
            return Err(Error::WrongEigenCountInZone {
                lo: zone.lo,
                hi: zone.hi,
                found: picked.len(),
                expected: self.m,
            });
        }
        self.root_from_eigenvalues(&picked)
    }

    /// Spectral root for the `m` lowest real eigenvalues.
    pub fn lowest_spectral_root(&self) -> Result<CMat> {
        let mut ev = self.eigenvalues()?;
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        ev.truncate(self.m);
        self.root_from_eigenvalues(&ev)
    }

    fn root_from_eigenvalues(&self, picked: &[Complex64]) -> Result<CMat> {
        let m = self.m;
        let spread = picked.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let clusters = cluster(picked, 1e-7 * spread);
        let mut x = CMat::zeros(m, m);
        let mut lambdas = Vec::with_capacity(m);
        let mut col = 0;
        for (lam, mult) in clusters {
            let lam = Complex64::new(lam.re, 0.0);
            let (v, _) = linalg::near_nullspace(&self.eval(lam), mult);
            x.view_mut((0, col), (m, mult)).copy_from(&v);
            lambdas.extend(std::iter::repeat_n(lam, mult));
            col += mult;
        }
        let cond = linalg::condition_number(&x);
        if !(cond <= EIGENBASIS_COND_LIMIT) {
            return Err(Error::IllConditionedEigenbasis(cond));
        }
        let x_inv = linalg::inverse(&x).ok_or(Error::IllConditionedEigenbasis(f64::INFINITY))?;
        let mut xd = x.clone();
        for (k, &lam) in lambdas.iter().enumerate() {
            xd.column_mut(k).scale_mut(lam.re);
        }
        Ok(xd * x_inv)
    }

    /// Quotient `B` with `A(z) = B(z)(zI - Z)`; fails when the remainder
    /// exceeds `rel_tol` times the natural scale `sum ||A_k|| ||Z||^k`.
    pub fn divide_right(&self, z: &CMat, rel_tol: f64) -> Result<MatrixPencil> {
        let d = self.degree();
        if d == 0 {
            return Err(Error::NonzeroRemainder(linalg::max_abs(&self.coeffs[0])));
        }
        let mut b = vec![linalg::zeros(self.m); d];
        b[d - 1] = self.coeffs[d].clone();
        for k in (1..d).rev() {
            b[k - 1] = &self.coeffs[k] + &b[k] * z;
        }
        let rem = &self.coeffs[0] + &b[0] * z;
        let zn = linalg::norm2(z).max(1.0);
        let natural: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| linalg::max_abs(a) * zn.powi(k as i32))
            .sum();
        let r = linalg::max_abs(&rem);
        if r > rel_tol * natural.max(1.0) {
            return Err(Error::NonzeroRemainder(r));
        }
        Ok(MatrixPencil { m: self.m, coeffs: b })
    }

    /// Factors `[Y_1, .., Y_d]` with `A(z) = (zI - Y_d) ... (zI - Y_1)`; the
    /// lowest remaining eigenvalues are peeled off as the rightmost factor.
    pub fn factorize(&self) -> Result<Vec<CMat>> {
        if !self.is_monic(1e-12 * self.scale().max(1.0)) {
            return Err(Error::NotMonic);
        }
        let mut rest = self.clone();
        let mut out = Vec::with_capacity(self.degree());
        while rest.degree() > 1 {
            let y = rest.lowest_spectral_root()?;
            rest = rest.divide_right(&y, 1e-8)?;
            out.push(y);
        }
        if rest.degree() == 1 {
            out.push(-rest.coeffs[0].clone());
        }
        Ok(out)
    }
}

/// Block Vandermonde with block rows `I, Z_j, .., Z_j^{d-1}`.
pub fn vandermonde(roots: &[CMat]) -> Result<CMat> {
    let d = roots.len();
    let m = roots.first().map(|z| z.nrows()).unwrap_or(0);
    let mut out = CMat::zeros(d * m, d * m);
    for (j, z) in roots.iter().enumerate() {
        if z.nrows() != m || z.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: z.nrows().max(z.ncols()),
            });
        }
        let mut p = linalg::eye(m);
        for r in 0..d {
            out.view_mut((r * m, j * m), (m, m)).copy_from(&p);
            p = &p * z;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hyperbolicity {
    NotWeakly,
    Weakly,
    Hyperbolic,
    Strongly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootZoneReport {
    /// Sampled envelope of the j-th ordered root; always a subset of the true zone.
    pub zones: Vec<Interval>,
    pub hyperbolicity: Hyperbolicity,
    /// Midpoints between consecutive envelopes, empty unless they are separated.
    pub separators: Vec<f64>,
    /// Smallest eigenvalue of `(-1)^j A(gamma_j)`; all positive certifies strong hyperbolicity.
    pub separator_margins: Vec<f64>,
    pub probes: usize,
}

/// Roots of a real scalar polynomial with ascending coefficients.
pub fn scalar_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let d = coeffs.len() - 1;
    let lead = coeffs[d];
    if lead == 0.0 {
        return Err(Error::SingularLeadingCoefficient);
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    if d == 1 {
        return Ok(vec![c(-coeffs[0] / lead)]);
    }
    let mut comp = CMat::zeros(d, d);
    for k in 0..d - 1 {
        comp[(k, k + 1)] = c(1.0);
    }
    for k in 0..d {
        comp[(d - 1, k)] = c(-coeffs[k] / lead);
    }
    let ev = comp.schur().eigenvalues().ok_or(Error::EigenFailure)?;
    Ok(ev.iter().copied().collect())
}

fn cluster(values: &[Complex64], tol: f64) -> Vec<(Complex64, usize)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out: Vec<(Complex64, usize, Complex64)> = Vec::new();
    for z in sorted {
        match out.last_mut() {
            Some((mean, count, _)) if (z - *mean).norm() <= tol => {
                *mean = (*mean * (*count as f64) + z) / ((*count + 1) as f64);
                *count += 1;
            }
            _ => out.push((z, 1, z)),
        }
    }
    out.into_iter().map(|(mean, count, _)| (mean, count)).collect()
}
