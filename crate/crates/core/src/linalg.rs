//! Small dense complex linear algebra on top of `nalgebra`.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Matrix 1-norm (max absolute column sum).
pub fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Frobenius norm, `sqrt(Tr{X X†})`.
pub fn frobenius(m: &CMat) -> f64 {
    libm::sqrt(m.iter().map(|c| c.norm_sqr()).sum::<f64>())
}

/// Inverts a square matrix, failing when the 1-norm condition estimate
/// exceeds `limit`. On failure the estimate (or infinity) is returned.
pub fn inverse_conditioned(m: &CMat, limit: f64) -> core::result::Result<(CMat, f64), f64> {
    if !m.is_square() {
        return Err(f64::INFINITY);
    }
    let inv = match m.clone().lu().try_inverse() {
        Some(inv) => inv,
        None => return Err(f64::INFINITY),
    };
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || cond > limit {
        return Err(cond);
    }
    Ok((inv, cond))
}

/// Largest elementwise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `log det` of a Hermitian positive-definite matrix via Cholesky.
pub fn log_det_hpd(m: &CMat) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonFinite(format!("Cholesky of {}x{} matrix", m.nrows(), m.ncols())))?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..m.nrows()).map(|i| libm::log(l[(i, i)].re)).sum::<f64>())
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Spectral radius of a square complex matrix via its Schur form.
pub fn spectral_radius(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let schur = nalgebra::Schur::new(m.clone());
    match schur.eigenvalues() {
        Some(ev) => ev.iter().map(|c| c.norm()).fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

pub fn ensure_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

pub fn check_shape(m: &CMat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Converts nested real rows into a real-valued complex matrix.
pub fn real_matrix(rows: &[&[f64]]) -> CMat {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nr, nc, |i, j| C64::new(rows[i][j], 0.0))
}
