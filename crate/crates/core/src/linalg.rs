//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `x^H M x` for Hermitian `M`; the imaginary part is discarded.
pub fn quadratic_form(m: &CMat, x: &[Complex64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        if x[j] == ZERO {
            continue;
        }
        let col = m.column(j);
        let mut s = ZERO;
        for i in 0..n {
            s += x[i].conj() * col[i];
        }
        acc += (s * x[j]).re;
    }
    acc
}

/// `D M D` for a real diagonal `D` given by its entries.
pub fn scale_symmetric(m: &CMat, d: &[f64]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (d[i] * d[j]))
}

/// Columns of `m` scaled row-wise by a real diagonal: `diag(d) m`.
pub fn scale_rows(m: &CMat, d: &[f64]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i])
}

/// `v^H w`.
pub fn inner(v: &[Complex64], w: &[Complex64]) -> Complex64 {
    v.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn column(m: &CMat, j: usize) -> &[Complex64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

/// Gram matrix `M^H M`.
pub fn gram(m: &CMat) -> CMat {
    m.adjoint() * m
}
