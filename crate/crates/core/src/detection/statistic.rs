//! Local MAPRT test statistics at one RX-AP for one SSA.
//!
//! The local model over a block of `τ` channel uses is
//! `y[m] = b[m]^T α + w[m]`, `α ~ CN(0, R)`, `w[m] ~ CN(0, σ²)`,
//! where `b_l[m] = v^H G_l x_l[m]` is the combined two-way response of TX-AP
//! `l`. Cross-target interference is not modelled by the detector.

use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::linalg::{hermitian_part, CMatrix, CVector};

/// `T = a^H C^{-1} a` with `a = Σ_m conj(b[m]) y[m]` and
/// `C = Σ_m conj(b[m]) b[m]^T + σ² R^{-1}`. `rcs_corr_inv = None` means
/// `R = I`.
pub fn fis_statistic(y: &[Complex64], b: &[CVector], rcs_corr_inv: Option<&CMatrix>, sigma_n2: f64) -> Result<f64> {
    let n = b.first().map_or(0, |v| v.len());
    let (a, c) = normal_equations(y, b, n, rcs_corr_inv, sigma_n2);
    let chol = c.cholesky().ok_or_else(|| IsacError::NotPsd { context: "FIS normal matrix (is σ_n² > 0?)".into() })?;
    Ok(a.dotc(&chol.solve(&a)).re.max(0.0))
}

fn normal_equations(y: &[Complex64], b: &[CVector], n: usize, rcs_corr_inv: Option<&CMatrix>, sigma_n2: f64) -> (CVector, CMatrix) {
    let mut a = CVector::zeros(n);
    let mut c = match rcs_corr_inv {
        Some(r) => r * Complex64::new(sigma_n2, 0.0),
        None => CMatrix::identity(n, n) * Complex64::new(sigma_n2, 0.0),
    };
    for (bm, &ym) in b.iter().zip(y) {
        let bc = bm.conjugate();
        a.axpy(ym, &bc, Complex64::new(1.0, 0.0));
        c.ger(Complex64::new(1.0, 0.0), &bc, &bm.clone(), Complex64::new(1.0, 0.0));
    }
    (a, hermitian_part(&c))
}

/// Prior knowledge of a partially-informed RX-AP about the unknown
/// effective transmit terms `c_l[m]`, where `b_l[m] = h c_l[m]` and
/// `h = v^H a(φ_{s,r}, θ_{s,r})`.
#[derive(Debug, Clone)]
pub struct PisPrior {
    pub h: Complex64,
    /// Prior mean of `c[m]`, one vector over TX-APs per channel use.
    pub mean: Vec<CVector>,
    /// Prior variance of `c_l[m]` per TX-AP; zero pins `c_l` to its mean.
    pub var: Vec<f64>,
}

impl PisPrior {
    pub fn zero_mean(h: Complex64, var: Vec<f64>, tau: usize) -> Self {
        let n = var.len();
        Self { h, mean: vec![CVector::zeros(n); tau], var }
    }
}

#[derive(Debug, Clone)]
pub struct PisResult {
    pub statistic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-posterior objective after every half-step.
    pub objective_trace: Vec<f64>,
}

fn rcs_quad(alpha: &CVector, rcs_corr_inv: Option<&CMatrix>) -> f64 {
    match rcs_corr_inv {
        Some(r) => alpha.dotc(&(r * alpha)).re,
        None => alpha.norm_squared(),
    }
}

/// Joint log-posterior (up to constants):
/// `−Σ|y − h α^T c|²/σ² − α^H R^{-1} α − Σ |c − μ|²/var`.
fn pis_objective(y: &[Complex64], prior: &PisPrior, alpha: &CVector, c: &[CVector], rcs_corr_inv: Option<&CMatrix>, sigma_n2: f64) -> f64 {
    let mut j = -rcs_quad(alpha, rcs_corr_inv);
    for (m, &ym) in y.iter().enumerate() {
        j -= (ym - prior.h * alpha.dot(&c[m])).norm_sqr() / sigma_n2;
        for (l, &v) in prior.var.iter().enumerate() {
            if v > 0.0 {
                j -= (c[m][l] - prior.mean[m][l]).norm_sqr() / v;
            }
        }
    }
    j
}

/// Alternating MAP over `α` and `c[m]`, started from `α = 1`. Returns
/// `σ² (J* + Σ|y|²/σ²)`, the log posterior ratio against the target-free
/// hypothesis scaled to match [`fis_statistic`].
pub fn pis_statistic(
    y: &[Complex64],
    prior: &PisPrior,
    rcs_corr_inv: Option<&CMatrix>,
    sigma_n2: f64,
    max_iters: usize,
    tol: f64,
) -> Result<PisResult> {
    let n = prior.var.len();
    let y_energy: f64 = y.iter().map(|v| v.norm_sqr()).sum();
    let mut alpha = CVector::from_element(n, Complex64::new(1.0, 0.0));
    let mut c = prior.mean.clone();
    let mut trace = Vec::with_capacity(2 * max_iters);
    let mut last_t: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        // c-step: rank-one LMMSE update per channel use
        let u = &alpha * prior.h;
        let spread: f64 = prior.var.iter().zip(u.iter()).map(|(v, ul)| v * ul.norm_sqr()).sum();
        for (m, &ym) in y.iter().enumerate() {
            let innov = (ym - u.dot(&prior.mean[m])) / (spread + sigma_n2);
            c[m] = CVector::from_fn(n, |l, _| prior.mean[m][l] + u[l].conj() * prior.var[l] * innov);
        }
        trace.push(pis_objective(y, prior, &alpha, &c, rcs_corr_inv, sigma_n2));
        // α-step: FIS solve with regressors h c[m]
        let b: Vec<CVector> = c.iter().map(|cm| cm * prior.h).collect();
        let (a, cm) = normal_equations(y, &b, n, rcs_corr_inv, sigma_n2);
        let chol = cm.cholesky().ok_or_else(|| IsacError::NotPsd { context: "PIS normal matrix (is σ_n² > 0?)".into() })?;
        alpha = chol.solve(&a);
        let j = pis_objective(y, prior, &alpha, &c, rcs_corr_inv, sigma_n2);
        trace.push(j);
        let t = sigma_n2 * (j + y_energy / sigma_n2);
        if let Some(prev) = last_t {
            if (t - prev).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                last_t = Some(t);
                converged = true;
                break;
            }
        }
        last_t = Some(t);
    }
    Ok(PisResult { statistic: last_t.unwrap_or(0.0).max(0.0), iterations, converged, objective_trace: trace })
}

/// `R^{-1}` for a given RCS correlation, as used by both statistics.
pub fn rcs_precision(corr: &CMatrix) -> Result<CMatrix> {
    let h = hermitian_part(corr);
    let chol = h.cholesky().ok_or_else(|| IsacError::NotPsd { context: "RCS correlation".into() })?;
    Ok(hermitian_part(&chol.inverse()))
}
