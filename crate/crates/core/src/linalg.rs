//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{IsacError, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Returns `F` with `F F^H = m` for a Hermitian PSD `m`. Eigenvalues in
/// `[-tol * ||m||, 0)` are clipped to zero; anything more negative is an error.
pub fn hermitian_psd_sqrt(m: &CMatrix, context: &str) -> Result<CMatrix> {
    let n = m.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let h = hermitian_part(m);
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(CMatrix::zeros(n, n));
    }
    let eig = h.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-9 * scale * n as f64 {
        return Err(IsacError::NotPsd {
            context: format!("{context}: min eigenvalue {min:e}, scale {scale:e}"),
        });
    }
    let mut f = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = Complex64::new(lam.max(0.0).sqrt(), 0.0);
        for i in 0..n {
            f[(i, j)] *= s;
        }
    }
    Ok(f)
}

/// Projects a real symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues at zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = symmetric_part(m).symmetric_eigen();
    let lam = eig.eigenvalues.map(|x| x.max(0.0));
    let v = &eig.eigenvectors;
    symmetric_part(&(v * DMatrix::from_diagonal(&lam) * v.transpose()))
}

/// Returns `F` (rank × n) with `F^T F = m` for real symmetric PSD `m`, keeping
/// only eigenvalues above `rel_tol * max_eig`.
pub fn real_psd_factor(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = symmetric_part(m).symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return DMatrix::zeros(0, n);
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&j| eig.eigenvalues[j] > rel_tol * max)
        .collect();
    let mut f = DMatrix::zeros(keep.len(), n);
    for (row, &j) in keep.iter().enumerate() {
        let s = eig.eigenvalues[j].sqrt();
        for i in 0..n {
            f[(row, i)] = s * eig.eigenvectors[(i, j)];
        }
    }
    f
}

/// Minimum eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetric_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Solves `A x = b` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMatrix, b: &CVector) -> Option<CVector> {
    let chol = hermitian_part(a).cholesky()?;
    Some(chol.solve(b))
}

/// `x^T m x` for real `m` and `x`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}
