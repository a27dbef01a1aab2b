//! Prescribed spectrum: ordered band edges, the edge polynomial `R(z)`, its
//! branch-resolved square root and the scalar edge series `c_k`, `ĉ_k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which half-plane a boundary value on the real axis is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Upper,
    Lower,
}

/// Half-open or closed real interval; `hi` may be `+inf`, `lo` may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn contains_closed(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandStructure {
    edges: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BandStructure {
    type Error = Error;
    fn try_from(edges: Vec<f64>) -> Result<Self> {
        BandStructure::new(edges)
    }
}

impl From<BandStructure> for Vec<f64> {
    fn from(bs: BandStructure) -> Self {
        bs.edges
    }
}

impl BandStructure {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 || edges.len().is_multiple_of(2) {
            return Err(Error::EvenEdgeCount(edges.len()));
        }
        if let Some(k) = edges.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFiniteEdge(k));
        }
        for (index, w) in edges.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(Error::NonMonotoneEdges {
                    index,
                    left: w[0],
                    right: w[1],
                });
            }
        }
        Ok(BandStructure { edges })
    }

    /// Number of finite bands.
    pub fn n(&self) -> usize {
        (self.edges.len() - 1) / 2
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn span(&self) -> f64 {
        self.edges[self.edges.len() - 1] - self.edges[0]
    }

    pub fn edge_sum(&self) -> f64 {
        self.edges.iter().sum()
    }

    /// `[E_{2j}, E_{2j+1}]` for `j < n`, then `[E_{2n}, inf)`.
    pub fn bands(&self) -> Vec<Interval> {
        let n = self.n();
        let mut out: Vec<Interval> = (0..n)
            .map(|j| Interval {
                lo: self.edges[2 * j],
                hi: self.edges[2 * j + 1],
            })
            .collect();
        out.push(Interval {
            lo: self.edges[2 * n],
            hi: f64::INFINITY,
        });
        out
    }

    /// Interior gaps `(E_{2j-1}, E_{2j})`, `j = 1..=n`, in order.
    pub fn gaps(&self) -> Vec<Interval> {
        (1..=self.n()).map(|j| self.gap(j)).collect()
    }

    /// Gap `j` in `1..=n`.
    pub fn gap(&self, j: usize) -> Interval {
        Interval {
            lo: self.edges[2 * j - 1],
            hi: self.edges[2 * j],
        }
    }

    /// The unbounded gap `(-inf, E_0)`.
    pub fn lower_gap(&self) -> Interval {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: self.edges[0],
        }
    }

    /// Index `j` of the interior gap whose closure contains `x`.
    pub fn gap_index(&self, x: f64, tol: f64) -> Option<usize> {
        (1..=self.n()).find(|&j| self.gap(j).contains_closed(x, tol))
    }

    pub fn in_band_interior(&self, x: f64) -> bool {
        self.bands().iter().any(|b| b.contains_open(x))
    }

    pub fn eval_r(&self, z: Complex64) -> Complex64 {
        self.edges.iter().fold(Complex64::new(1.0, 0.0), |acc, &e| acc * (z - e))
    }

    /// `R'(z)` by the product rule.
    pub fn eval_r_prime(&self, z: Complex64) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for skip in 0..self.edges.len() {
            let mut term = Complex64::new(1.0, 0.0);
            for (k, &e) in self.edges.iter().enumerate() {
                if k != skip {
                    term *= z - e;
                }
            }
            total += term;
        }
        total
    }

    /// Coefficients of `R` by ascending power.
    pub fn r_coefficients(&self) -> Vec<f64> {
        let mut coeffs = vec![1.0];
        for &e in &self.edges {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, &a) in coeffs.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= e * a;
            }
            coeffs = next;
        }
        coeffs
    }

    /// `R^{1/2}(z)` with every `arg(z - E_l)` taken in `[0, 2pi)`. Cuts lie on
    /// the spectrum; real arguments give the boundary value from above.
    pub fn eval_sqrt_r(&self, z: Complex64) -> Complex64 {
        let mut modulus = 1.0;
        let mut phase = 0.0;
        for &e in &self.edges {
            let w = z - e;
            modulus *= w.norm().sqrt();
            let mut a = w.im.atan2(w.re);
            if a < 0.0 {
                a += 2.0 * PI;
            }
            phase += 0.5 * a;
        }
        if modulus == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(modulus, phase)
    }

    /// Boundary value of `R^{1/2}` at real `lambda` from the given side.
    /// The flag is true when `lambda` is inside a band, where the two sides differ.
    pub fn sqrt_r_boundary(&self, lambda: f64, side: Side) -> (Complex64, bool) {
        let upper = self.eval_sqrt_r(Complex64::new(lambda, 0.0));
        let on_band = self.in_band_interior(lambda);
        let value = match side {
            Side::Upper => upper,
            Side::Lower => -upper.conj(),
        };
        (value, on_band)
    }

    /// Edge series to order `k_max` via the closed multinomial sums.
    pub fn edge_series(&self, k_max: usize) -> EdgeSeries {
        let mut chat = Vec::with_capacity(k_max + 1);
        let mut c = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let (h, p) = multinomial_terms(&self.edges, k);
            chat.push(h);
            c.push(p);
        }
        EdgeSeries { chat, c }
    }

    /// Edge series via multiplication of the per-edge binomial series.
    pub fn edge_series_by_products(&self, k_max: usize) -> EdgeSeries {
        let len = k_max + 1;
        let mut chat = vec![0.0; len];
        let mut c = vec![0.0; len];
        chat[0] = 1.0;
        c[0] = 1.0;
        let (bin_minus, bin_plus) = half_binomials(k_max);
        for &e in &self.edges {
            let mut powers = vec![1.0; len];
            for j in 1..len {
                powers[j] = powers[j - 1] * e;
            }
            let fm: Vec<f64> = (0..len).map(|j| bin_minus[j] * powers[j]).collect();
            let fp: Vec<f64> = (0..len).map(|j| bin_plus[j] * powers[j]).collect();
            chat = truncated_product(&chat, &fm);
            c = truncated_product(&c, &fp);
        }
        EdgeSeries { chat, c }
    }
}

/// Scalar series `ĉ_k` (of `prod (1 - E eta)^{-1/2}`) and `c_k`
/// (of `prod (1 - E eta)^{1/2}`), index `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSeries {
    pub chat: Vec<f64>,
    pub c: Vec<f64>,
}

impl EdgeSeries {
    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// `max_k |sum_l ĉ_{k-l} c_l - delta_{k0}|`.
    pub fn convolution_defect(&self) -> f64 {
        (0..self.c.len())
            .map(|k| {
                let s: f64 = (0..=k).map(|l| self.chat[k - l] * self.c[l]).sum();
                (s - if k == 0 { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Coefficients of `(1 - x)^{-1/2}` and `(1 - x)^{1/2}` up to `x^k_max`.
fn half_binomials(k_max: usize) -> (Vec<f64>, Vec<f64>) {
    let mut minus = vec![1.0; k_max + 1];
    for j in 1..=k_max {
        minus[j] = minus[j - 1] * (2 * j - 1) as f64 / (2 * j) as f64;
    }
    let plus = (0..=k_max).map(|j| -minus[j] / (2.0 * j as f64 - 1.0)).collect();
    (minus, plus)
}

fn truncated_product(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len();
    (0..len).map(|k| (0..=k).map(|l| a[l] * b[k - l]).sum()).collect()
}

/// Sum over compositions `j_0 + ... + j_2n = k` of the two product weights.
fn multinomial_terms(edges: &[f64], k: usize) -> (f64, f64) {
    let (bin_minus, _) = half_binomials(k);
    let mut parts = vec![0usize; edges.len()];
    let mut acc = (0.0, 0.0);
    compositions(edges, &bin_minus, k, 0, &mut parts, &mut acc);
    acc
}

fn compositions(
    edges: &[f64],
    bin: &[f64],
    remaining: usize,
    slot: usize,
    parts: &mut [usize],
    acc: &mut (f64, f64),
) {
    if slot + 1 == edges.len() {
        parts[slot] = remaining;
        let mut w_minus = 1.0;
        let mut w_plus = 1.0;
        for (&j, &e) in parts.iter().zip(edges) {
            let term = bin[j] * e.powi(j as i32);
            w_minus *= term;
            w_plus *= term / (2.0 * j as f64 - 1.0);
        }
        acc.0 += w_minus;
        // odd number of factors each carrying -1: overall sign is -(...)
        acc.1 -= w_plus;
        return;
    }
    for j in 0..=remaining {
        parts[slot] = j;
        compositions(edges, bin, remaining - j, slot + 1, parts, acc);
    }
}
