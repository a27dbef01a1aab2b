//! The quadruple `F, G_1, G_2, H` at the anchor point, its identities, the
//! half-line and full-line Weyl-Titchmarsh matrices and the spectral density.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::band::{BandStructure, Side};
use crate::dirichlet::DirichletSet;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::linalg::{self, c, CMat, I};
use crate::pencil::MatrixPencil;

/// Relative size of interpolated coefficients beyond the expected degree
/// above which the residues are declared not to cancel.
pub const RESIDUE_CANCEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorData {
    pub f: MatrixPencil,
    pub g1: MatrixPencil,
    pub g2: MatrixPencil,
    pub h: MatrixPencil,
    pub ds: DirichletSet,
    pub bs: BandStructure,
    /// Largest relative coefficient dropped by the degree truncation.
    pub interpolation_tail: f64,
}

impl OperatorData {
    /// Max coefficient norm across the quadruple.
    pub fn scale(&self) -> f64 {
        [&self.f, &self.g1, &self.g2, &self.h]
            .iter()
            .map(|p| p.scale())
            .fold(1.0, f64::max)
    }
}

/// `M_+` or `M_-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfLine {
    Plus,
    Minus,
}

impl HalfLine {
    pub fn sign(self) -> f64 {
        match self {
            HalfLine::Plus => 1.0,
            HalfLine::Minus => -1.0,
        }
    }
}

/// Builds `G_1 = S F`, `G_2 = F S`, `H = R F^{-1} + S F S` with
/// `S = sum_k eps_k Gamma_k / (z - mu_k)`, converted to coefficients by
/// trigonometric interpolation on a circle enclosing every `mu_k`.
pub fn build_quadruple(f: &MatrixPencil, ds: &DirichletSet, bs: &BandStructure) -> Result<OperatorData> {
    let n = bs.n();
    let m = f.dim();
    if f.degree() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.degree(),
        });
    }
    let count = n + 4;
    let center = 0.5 * (bs.edges()[0] + bs.edges()[2 * n]);
    let radius = bs.span();
    let nodes: Vec<Complex64> = (0..count)
        .map(|j| c(center) + Complex64::from_polar(radius, 2.0 * PI * (j as f64 + 0.5) / count as f64))
        .collect();

    let mut g1_vals = Vec::with_capacity(count);
    let mut g2_vals = Vec::with_capacity(count);
    let mut h_vals = Vec::with_capacity(count);
    for &z in &nodes {
        let fz = f.eval(z);
        let s = ds.weighted_sum(z);
        let finv = linalg::inverse(&fz).ok_or_else(|| Error::at(z))?;
        g1_vals.push(&s * &fz);
        g2_vals.push(&fz * &s);
        h_vals.push(finv * bs.eval_r(z) + &s * &fz * &s);
    }

    let fit = |vals: &[CMat], keep: usize| -> (MatrixPencil, f64) {
        let coeffs = circle_fit(vals, center, radius);
        let size = linalg::max_abs_list(&coeffs).max(1.0);
        let tail = linalg::max_abs_list(&coeffs[keep.min(coeffs.len())..]) / size;
        let kept = coeffs.into_iter().take(keep.max(1)).collect();
        (MatrixPencil::new(kept).expect("consistent dims"), tail)
    };
    let (g1, t1) = fit(&g1_vals, n);
    let (g2, t2) = fit(&g2_vals, n);
    let (h, t3) = fit(&h_vals, n + 2);
    let tail = t1.max(t2).max(t3);
    if !(tail <= RESIDUE_CANCEL_TOL) {
        return Err(Error::ResidueNotCancelled(tail));
    }
    debug_assert_eq!(h.dim(), m);
    Ok(OperatorData {
        f: f.clone(),
        g1,
        g2,
        h,
        ds: ds.clone(),
        bs: bs.clone(),
        interpolation_tail: tail,
    })
}

/// Monomial coefficients of the polynomial interpolating `vals` at the nodes
/// `center + radius e^{i theta_j}`, `theta_j = 2 pi (j + 1/2) / N`.
fn circle_fit(vals: &[CMat], center: f64, radius: f64) -> Vec<CMat> {
    let count = vals.len();
    let m = vals[0].nrows();
    // coefficients in w = (z - center) / radius
    let w_coeffs: Vec<CMat> = (0..count)
        .map(|k| {
            let mut acc = linalg::zeros(m);
            for (j, v) in vals.iter().enumerate() {
                let theta = 2.0 * PI * (j as f64 + 0.5) / count as f64;
                acc += v * Complex64::from_polar(1.0 / count as f64, -(k as f64) * theta);
            }
            acc / c(radius.powi(k as i32))
        })
        .collect();
    // Taylor shift: sum_k b_k (z - center)^k -> monomials in z
    let mut out = vec![linalg::zeros(m); count];
    for (k, b) in w_coeffs.iter().enumerate() {
        let mut binom = 1.0;
        for p in 0..=k {
            // coefficient of z^p in (z - center)^k is C(k, p) (-center)^{k-p}
            out[p] += b * c(binom * (-center).powi((k - p) as i32));
            binom = binom * (k - p) as f64 / (p + 1) as f64;
        }
    }
    out
}

/// `M_pm(z) = pm i R^{1/2} F^{-1} - G_1 F^{-1}`, plus the mismatch against
/// the right-handed form `pm i R^{1/2} F^{-1} - F^{-1} G_2`.
pub fn weyl_from_values(fz: &CMat, g1z: &CMat, g2z: &CMat, sqrt_r: Complex64, side: HalfLine) -> Result<(CMat, f64)> {
    let finv = linalg::inverse(fz).ok_or(Error::SingularN { re: f64::NAN, im: f64::NAN })?;
    let lead = &finv * (I * sqrt_r * side.sign());
    let left = &lead - g1z * &finv;
    let right = &lead - &finv * g2z;
    let gap = linalg::max_abs(&(&left - &right)) / linalg::max_abs(&left).max(f64::MIN_POSITIVE);
    Ok((left, gap))
}

/// Pencil values at one point, shared by every query at that point.
#[derive(Debug, Clone)]
struct PointEval {
    sqrt_r: Complex64,
    f: CMat,
    g1: CMat,
    g2: CMat,
    h: CMat,
}

/// Evaluator for the Weyl-Titchmarsh matrices of an [`OperatorData`]; point
/// evaluations are cached behind a lock and safe to share across threads.
#[derive(Debug)]
pub struct WeylEvaluator {
    od: OperatorData,
    cache: Mutex<HashMap<(u64, u64, u8), Arc<PointEval>>>,
}

/// Output of the full-line evaluation.
#[derive(Debug, Clone)]
pub struct FullWeyl {
    pub matrix: CMat,
    /// Relative mismatch of the block-formula route.
    pub route_gap: f64,
}

#[derive(Debug, Clone)]
pub struct Density {
    pub matrix: CMat,
    /// False outside the band interiors, where the density vanishes.
    pub in_band: bool,
}

impl WeylEvaluator {
    pub fn new(od: OperatorData) -> Self {
        WeylEvaluator {
            od,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn data(&self) -> &OperatorData {
        &self.od
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    fn check_regular(&self, z: Complex64) -> Result<()> {
        let tol = 1e-12 * self.od.bs.span().max(1.0);
        if self.od.ds.data.iter().any(|d| (z - d.mu).norm() <= tol) {
            return Err(Error::at(z));
        }
        Ok(())
    }

    fn point(&self, z: Complex64, side: Side) -> Result<Arc<PointEval>> {
        self.check_regular(z)?;
        let key = (z.re.to_bits(), z.im.to_bits(), side as u8);
        if let Some(hit) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let od = &self.od;
        let sqrt_r = if z.im == 0.0 {
            od.bs.sqrt_r_boundary(z.re, side).0
        } else {
            od.bs.eval_sqrt_r(z)
        };
        let pe = Arc::new(PointEval {
            sqrt_r,
            f: od.f.eval(z),
            g1: od.g1.eval(z),
            g2: od.g2.eval(z),
            h: od.h.eval(z),
        });
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, pe.clone());
        }
        Ok(pe)
    }

    fn reject_edges(&self, z: Complex64) -> Result<()> {
        if z.im == 0.0 && self.od.bs.edges().contains(&z.re) {
            return Err(Error::at(z));
        }
        Ok(())
    }

    /// `M_pm(z)`; real `z` gets the boundary value from the upper half-plane.
    pub fn weyl_half_line(&self, z: Complex64, side: HalfLine) -> Result<CMat> {
        self.weyl_half_line_checked(z, side).map(|(m, _)| m)
    }

    /// `M_pm(z)` and the relative mismatch between its two closed forms.
    pub fn weyl_half_line_checked(&self, z: Complex64, side: HalfLine) -> Result<(CMat, f64)> {
        let p = self.point(z, Side::Upper)?;
        weyl_from_values(&p.f, &p.g1, &p.g2, p.sqrt_r, side).map_err(|_| Error::at(z))
    }

    /// Boundary value of `M_pm` at real `lambda` from the given half-plane.
    pub fn weyl_half_line_boundary(&self, lambda: f64, side: HalfLine, from: Side) -> Result<CMat> {
        let z = c(lambda);
        let p = self.point(z, from)?;
        weyl_from_values(&p.f, &p.g1, &p.g2, p.sqrt_r, side)
            .map(|(m, _)| m)
            .map_err(|_| Error::at(z))
    }

    /// The `2m x 2m` matrix from the pencil blocks, cross-checked against the
    /// block formula built from `M_pm` and `N_pm = M_- pm M_+`.
    pub fn weyl_full(&self, z: Complex64) -> Result<FullWeyl> {
        self.reject_edges(z)?;
        let p = self.point(z, Side::Upper)?;
        let m = self.od.f.dim();
        let pref = I * 0.5 / p.sqrt_r;
        let direct = blocks(&(&p.h * pref), &(&p.g2 * -pref), &(&p.g1 * -pref), &(&p.f * pref), m);

        let (mp, _) = weyl_from_values(&p.f, &p.g1, &p.g2, p.sqrt_r, HalfLine::Plus).map_err(|_| Error::at(z))?;
        let (mm, _) = weyl_from_values(&p.f, &p.g1, &p.g2, p.sqrt_r, HalfLine::Minus).map_err(|_| Error::at(z))?;
        let n_plus = &mm + &mp;
        let n_minus = &mm - &mp;
        let nm_inv = linalg::inverse(&n_minus).ok_or(Error::SingularN { re: z.re, im: z.im })?;
        let half = c(0.5);
        let via_m = blocks(
            &(&mp * &nm_inv * &mm),
            &(&nm_inv * &n_plus * half),
            &(&n_plus * &nm_inv * half),
            &nm_inv,
            m,
        );
        let route_gap = linalg::max_abs(&(&direct - &via_m)) / linalg::max_abs(&direct).max(f64::MIN_POSITIVE);
        Ok(FullWeyl {
            matrix: direct,
            route_gap,
        })
    }

    /// `(1/(2 pi R^{1/2}(lambda))) [[H, -G_2], [-G_1, F]]` on the band
    /// interiors (upper boundary value of `R^{1/2}`), zero elsewhere.
    pub fn spectral_density(&self, lambda: f64) -> Density {
        let m = self.od.f.dim();
        if !self.od.bs.in_band_interior(lambda) {
            return Density {
                matrix: CMat::zeros(2 * m, 2 * m),
                in_band: false,
            };
        }
        let z = c(lambda);
        let (sqrt_r, _) = self.od.bs.sqrt_r_boundary(lambda, Side::Upper);
        let k = c(1.0) / (sqrt_r * (2.0 * PI));
        let od = &self.od;
        let mat = blocks(
            &(od.h.eval(z) * k),
            &(od.g2.eval(z) * -k),
            &(od.g1.eval(z) * -k),
            &(od.f.eval(z) * k),
            m,
        );
        Density { matrix: mat, in_band: true }
    }

    /// `||(1/pi) Im M(lambda + i eps) - density(lambda)||`.
    pub fn stieltjes_check(&self, lambda: f64, eps: f64) -> Result<f64> {
        let full = self.weyl_full(Complex64::new(lambda, eps))?;
        let im = linalg::im_part(&full.matrix) / c(PI);
        Ok(linalg::max_abs(&(im - self.spectral_density(lambda).matrix)))
    }

    /// `||M_+(lambda + i eps) - M_-(lambda - i eps)||`.
    pub fn reflectionless_gap(&self, lambda: f64, eps: f64) -> Result<f64> {
        let up = self.weyl_half_line(Complex64::new(lambda, eps), HalfLine::Plus)?;
        let dn = self.weyl_half_line(Complex64::new(lambda, -eps), HalfLine::Minus)?;
        Ok(linalg::max_abs(&(up - dn)))
    }

    /// Smallest eigenvalue of `Im(pm M_pm(z))` over the samples, per side.
    pub fn herglotz_margins(&self, samples: &[Complex64], mode: ExecMode) -> Result<(f64, f64)> {
        let vals = exec::map(mode, samples, |&z| -> Result<(f64, f64)> {
            let mp = self.weyl_half_line(z, HalfLine::Plus)?;
            let mm = self.weyl_half_line(z, HalfLine::Minus)?;
            Ok((
                linalg::min_hermitian_eigenvalue(&linalg::im_part(&mp)),
                linalg::min_hermitian_eigenvalue(&linalg::im_part(&(-mm))),
            ))
        });
        let mut plus = f64::INFINITY;
        let mut minus = f64::INFINITY;
        for v in vals {
            let (a, b) = v?;
            plus = plus.min(a);
            minus = minus.min(b);
        }
        Ok((plus, minus))
    }
}

fn blocks(a: &CMat, b: &CMat, cc: &CMat, d: &CMat, m: usize) -> CMat {
    let mut out = CMat::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(a);
    out.view_mut((0, m), (m, m)).copy_from(b);
    out.view_mut((m, 0), (m, m)).copy_from(cc);
    out.view_mut((m, m), (m, m)).copy_from(d);
    out
}

/// Residuals of the quadruple identities, relative to their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrupleReport {
    /// `G_2(conj z)^* = G_1(z)`.
    pub g_symmetry: Residual,
    /// `F G_1 = G_2 F`.
    pub fg_intertwining: Residual,
    /// `H G_2 = G_1 H`.
    pub hg_intertwining: Residual,
    /// `F H - G_2^2 = R I`.
    pub fh_identity: Residual,
    /// `H F - G_1^2 = R I`.
    pub hf_identity: Residual,
    pub f_degree: usize,
    pub g_degree: usize,
    pub h_degree: usize,
    pub h_monic: bool,
    pub h_selfadjoint_defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// Coefficientwise, absolute.
    pub coeff_abs: f64,
    /// Coefficientwise, relative to the largest product coefficient.
    pub coeff_rel: f64,
    /// Worst relative pointwise residual over the samples.
    pub sample_rel: f64,
    pub worst_at: [f64; 2],
}

impl QuadrupleReport {
    pub fn max_rel(&self) -> f64 {
        [
            &self.g_symmetry,
            &self.fg_intertwining,
            &self.hg_intertwining,
            &self.fh_identity,
            &self.hf_identity,
        ]
        .iter()
        .map(|r| r.coeff_rel.max(r.sample_rel))
        .fold(0.0, f64::max)
    }
}

/// Identity residuals for an arbitrary quadruple (also used along the flow).
pub fn quadruple_residuals(
    f: &MatrixPencil,
    g1: &MatrixPencil,
    g2: &MatrixPencil,
    h: &MatrixPencil,
    bs: &BandStructure,
    samples: &[Complex64],
) -> QuadrupleReport {
    let m = f.dim();
    let r = MatrixPencil::new(bs.r_coefficients().iter().map(|&v| linalg::eye(m) * c(v)).collect()).expect("dims");
    let coeff = |lhs: &MatrixPencil, rhs: &MatrixPencil, parts: &[&MatrixPencil]| -> (f64, f64) {
        let abs = lhs.distance(rhs);
        let size = parts.iter().map(|p| p.scale()).fold(1.0, f64::max);
        (abs, abs / size)
    };
    let point = |z: Complex64, which: usize| -> f64 {
        let fz = f.eval(z);
        let g1z = g1.eval(z);
        let g2z = g2.eval(z);
        let hz = h.eval(z);
        let rz = bs.eval_r(z);
        let nf = linalg::max_abs(&fz);
        let ng = linalg::max_abs(&g1z).max(linalg::max_abs(&g2z));
        let nh = linalg::max_abs(&hz);
        let (res, size) = match which {
            0 => (g2.eval(z.conj()).adjoint() - &g1z, ng),
            1 => (&fz * &g1z - &g2z * &fz, nf * ng),
            2 => (&hz * &g2z - &g1z * &hz, nh * ng),
            3 => (&fz * &hz - &g2z * &g2z - linalg::eye(m) * rz, nf * nh + ng * ng + rz.norm()),
            _ => (&hz * &fz - &g1z * &g1z - linalg::eye(m) * rz, nf * nh + ng * ng + rz.norm()),
        };
        linalg::max_abs(&res) / size.max(f64::MIN_POSITIVE)
    };
    let sampled = |which: usize| -> (f64, [f64; 2]) {
        samples.iter().fold((0.0, [f64::NAN, f64::NAN]), |(w, at), &z| {
            let v = point(z, which);
            if v > w || v.is_nan() {
                (v, [z.re, z.im])
            } else {
                (w, at)
            }
        })
    };
    let mk = |(abs, rel): (f64, f64), which: usize| {
        let (s, at) = sampled(which);
        Residual {
            coeff_abs: abs,
            coeff_rel: rel,
            sample_rel: s,
            worst_at: at,
        }
    };
    let fg = f.mul(g1);
    let gf = g2.mul(f);
    let hg = h.mul(g2);
    let gh = g1.mul(h);
    let fh = f.mul(h).sub(&g2.mul(g2));
    let hf = h.mul(f).sub(&g1.mul(g1));
    let g_sym = mk(coeff(&g2.adjoint(), g1, &[g1, g2]), 0);
    let fg_r = mk(coeff(&fg, &gf, &[&fg, &gf]), 1);
    let hg_r = mk(coeff(&hg, &gh, &[&hg, &gh]), 2);
    let fh_r = mk(coeff(&fh, &r, &[&f.mul(h), &g2.mul(g2), &r]), 3);
    let hf_r = mk(coeff(&hf, &r, &[&h.mul(f), &g1.mul(g1), &r]), 4);
    let tol = 1e-10 * h.scale().max(1.0);
    QuadrupleReport {
        g_symmetry: g_sym,
        fg_intertwining: fg_r,
        hg_intertwining: hg_r,
        fh_identity: fh_r,
        hf_identity: hf_r,
        f_degree: f.clone().trimmed(tol).degree(),
        g_degree: g1.clone().trimmed(tol).degree().max(g2.clone().trimmed(tol).degree()),
        h_degree: h.clone().trimmed(tol).degree(),
        h_monic: h.is_monic(tol),
        h_selfadjoint_defect: h.coeffs().iter().map(linalg::hermitian_defect).fold(0.0, f64::max),
    }
}

pub fn verify_quadruple(od: &OperatorData, samples: &[Complex64]) -> QuadrupleReport {
    quadruple_residuals(&od.f, &od.g1, &od.g2, &od.h, &od.bs, samples)
}
