//! Small dense complex linear-algebra helpers shared by the pencil, operator
//! and flow modules. Everything operates on `CMat = DMatrix<Complex64>`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn zeros(m: usize) -> CMat {
    CMat::zeros(m, m)
}

pub fn eye(m: usize) -> CMat {
    CMat::identity(m, m)
}

pub fn diag(entries: &[f64]) -> CMat {
    let m = entries.len();
    let mut out = zeros(m);
    for (k, &e) in entries.iter().enumerate() {
        out[(k, k)] = c(e);
    }
    out
}

pub fn from_real_rows(m: usize, rows: &[f64]) -> CMat {
    CMat::from_row_iterator(m, m, rows.iter().map(|&v| c(v)))
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest absolute entry across a list of matrices.
pub fn max_abs_list(list: &[CMat]) -> f64 {
    list.iter().map(max_abs).fold(0.0, f64::max)
}

pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn hermitian_defect(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// `(A - A*) / 2i`, always Hermitian.
pub fn im_part(a: &CMat) -> CMat {
    (a - a.adjoint()) * Complex64::new(0.0, -0.5)
}

/// `(A + A*) / 2`.
pub fn re_part(a: &CMat) -> CMat {
    hermitize(a)
}

/// Ascending eigenvalues of the Hermitian part of `a`.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitize(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_hermitian_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigenvalues(a)[0]
}

/// Eigen-decomposition of the Hermitian part, eigenpairs sorted ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitize(a));
    let m = a.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = zeros(m);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// Singular values (descending) and right singular vectors as columns,
/// ordered to match.
pub fn svd_sorted(a: &CMat) -> (Vec<f64>, CMat) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let n = a.ncols();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let vals: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = CMat::zeros(n, order.len());
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            v[(r, dst)] = v_t[(src, r)].conj();
        }
    }
    (vals, v)
}

/// Condition number in the spectral norm; infinite for singular input.
pub fn condition_number(a: &CMat) -> f64 {
    let (s, _) = svd_sorted(a);
    let smin = *s.last().unwrap_or(&0.0);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        s[0] / smin
    }
}

/// Orthonormal basis of the `k` right singular vectors with the smallest
/// singular values.
pub fn near_nullspace(a: &CMat, k: usize) -> (CMat, Vec<f64>) {
    let (s, v) = svd_sorted(a);
    let n = v.ncols();
    let start = n - k;
    (v.columns(start, k).into_owned(), s[start..].to_vec())
}

/// Numerical rank at relative tolerance `rel_tol` of the largest singular value.
pub fn numerical_rank(a: &CMat, rel_tol: f64, abs_floor: f64) -> usize {
    let (s, _) = svd_sorted(a);
    let cut = (s.first().copied().unwrap_or(0.0) * rel_tol).max(abs_floor);
    s.iter().filter(|&&v| v > cut).count()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Spectral norm.
pub fn norm2(a: &CMat) -> f64 {
    svd_sorted(a).0.first().copied().unwrap_or(0.0)
}

/// Serde adapter: a matrix as a list of rows of `[re, im]` pairs.
pub mod serde_mat {
    use super::CMat;
    use num_complex::Complex64;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(a: &CMat) -> Vec<Vec<[f64; 2]>> {
        a.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
        let nr = rows.len();
        let nc = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != nc) {
            return Err("ragged matrix rows".into());
        }
        Ok(CMat::from_fn(nr, nc, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
    }

    pub fn serialize<S: Serializer>(a: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Serde adapter for a list of matrices.
pub mod serde_mat_list {
    use super::{serde_mat, CMat};
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(list: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        list.iter().map(serde_mat::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let raw = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        raw.iter().map(|r| serde_mat::from_rows(r).map_err(D::Error::custom)).collect()
    }
}
