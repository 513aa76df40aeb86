//! Precoders, combiners, symbol blocks and per-AP transmit signals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPlan;
use crate::channel::{draw_comm_channels, estimate_channels, ChannelEstimateSet, ChannelStatistics};
use crate::error::{IsacError, Result};
use crate::linalg::{CMatrix, CVector};
use crate::power::PowerVector;
use crate::rng::{complex_normal, StreamRng};
use crate::scenario::{array_response, Scenario};

/// How the LP-MMSE precoder is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `sqrt(E{||w̄||²})` estimated over independent estimate draws.
    #[default]
    Ensemble,
    /// Divide by `||w̄||` of the realisation at hand.
    PerRealization,
}

/// Unit-norm precoders. Communication precoders exist for `l ∈ M_k`,
/// sensing precoders for `l ∈ T_s`; both indexed by `(user or ssa) * L + l`.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub num_aps: usize,
    pub w_comm: Vec<Option<CVector>>,
    pub w_sens: Vec<Option<CVector>>,
    /// Normalisation divisor per (k, l); zero where unassigned.
    pub norm_scale: Vec<f64>,
}

impl PrecoderSet {
    pub fn comm(&self, k: usize, l: usize) -> Option<&CVector> {
        self.w_comm[k * self.num_aps + l].as_ref()
    }
    pub fn sens(&self, s: usize, l: usize) -> Option<&CVector> {
        self.w_sens[s * self.num_aps + l].as_ref()
    }
}

/// Un-normalised LP-MMSE precoders `w̄_{k,l}` of one TX-AP for every
/// `k ∈ U_l`:
/// `w̄ = p_ul (Σ_{i∈U_l} p_ul (ĥ_il ĥ_il^H + Z_il) + σ_n² I)^{-1} ĥ_kl`.
pub fn lp_mmse_raw(estimates: &ChannelEstimateSet, ues: &[usize], l: usize, p_ul: f64, sigma_n2: f64) -> Vec<CVector> {
    if ues.is_empty() {
        return Vec::new();
    }
    let m = estimates.get(ues[0], l).len();
    let mut mat = CMatrix::identity(m, m) * Complex64::new(sigma_n2, 0.0);
    for &i in ues {
        let h = estimates.get(i, l);
        mat += (h * h.adjoint() + estimates.err(i, l)) * Complex64::new(p_ul, 0.0);
    }
    let mat = crate::linalg::hermitian_part(&mat);
    let chol = mat.cholesky().expect("σ_n² I regulariser keeps the LP-MMSE matrix positive definite");
    ues.iter()
        .map(|&k| chol.solve(estimates.get(k, l)) * Complex64::new(p_ul, 0.0))
        .collect()
}

/// `sqrt(E{||w̄_{k,l}||²})` per (k, l), averaged over `n_norm` independent
/// channel/estimate draws.
pub fn estimate_norm_scale(
    stats: &ChannelStatistics,
    plan: &AssignmentPlan,
    p_ul: f64,
    sigma_n2: f64,
    n_norm: usize,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let l_count = plan.num_aps;
    let mut acc = vec![0.0; plan.num_ues * l_count];
    for _ in 0..n_norm.max(1) {
        let ch = draw_comm_channels(stats, rng);
        let est = estimate_channels(&ch, stats, rng);
        for &l in &plan.tx_aps {
            let ues = &plan.ap_ues[l];
            for (w, &k) in lp_mmse_raw(&est, ues, l, p_ul, sigma_n2).iter().zip(ues) {
                acc[k * l_count + l] += w.norm_squared();
            }
        }
    }
    acc.iter().map(|a| (a / n_norm.max(1) as f64).sqrt()).collect()
}

/// Normalised LP-MMSE communication precoders for one estimate realisation.
pub fn lp_mmse_precoders(
    estimates: &ChannelEstimateSet,
    plan: &AssignmentPlan,
    p_ul: f64,
    sigma_n2: f64,
    norm_scale: &[f64],
    mode: Normalization,
) -> (Vec<Option<CVector>>, Vec<f64>) {
    let l_count = plan.num_aps;
    let mut w = vec![None; plan.num_ues * l_count];
    let mut scale = vec![0.0; plan.num_ues * l_count];
    for &l in &plan.tx_aps {
        let ues = &plan.ap_ues[l];
        for (wk, &k) in lp_mmse_raw(estimates, ues, l, p_ul, sigma_n2).into_iter().zip(ues) {
            let idx = k * l_count + l;
            let div = match mode {
                Normalization::Ensemble => norm_scale[idx],
                Normalization::PerRealization => wk.norm(),
            };
            scale[idx] = div;
            w[idx] = Some(if div > 0.0 { wk / Complex64::new(div, 0.0) } else { wk });
        }
    }
    (w, scale)
}

/// ω_{s,l} = conj(a(φ_{s,l}, ϑ_{s,l})) / √M for `l ∈ T_s`.
pub fn mrt_sensing_precoders(scenario: &Scenario, plan: &AssignmentPlan) -> Vec<Option<CVector>> {
    let l_count = plan.num_aps;
    let norm = Complex64::new((scenario.antennas() as f64).sqrt(), 0.0);
    let mut w = vec![None; plan.num_ssas * l_count];
    for (s, tx) in plan.ssa_tx.iter().enumerate() {
        for &l in tx {
            w[s * l_count + l] = Some(scenario.ssa_steering(s, l).conjugate() / norm);
        }
    }
    w
}

pub fn build_precoders(
    scenario: &Scenario,
    plan: &AssignmentPlan,
    estimates: &ChannelEstimateSet,
    norm_scale: &[f64],
    mode: Normalization,
) -> PrecoderSet {
    let cfg = &scenario.config;
    let (w_comm, norm_scale) = lp_mmse_precoders(estimates, plan, cfg.p_ul, cfg.sigma_n2, norm_scale, mode);
    PrecoderSet { num_aps: plan.num_aps, w_comm, w_sens: mrt_sensing_precoders(scenario, plan), norm_scale }
}

/// MRC combiners `v_{s,r} = a(φ_{s,r}, θ_{s,r}) / √M` for `r ∈ R_s`.
#[derive(Debug, Clone)]
pub struct CombinerSet {
    pub num_aps: usize,
    pub v: Vec<Option<CVector>>,
}

impl CombinerSet {
    pub fn get(&self, s: usize, r: usize) -> Option<&CVector> {
        self.v[s * self.num_aps + r].as_ref()
    }
}

pub fn mrc_combiners(scenario: &Scenario, plan: &AssignmentPlan) -> CombinerSet {
    let l_count = plan.num_aps;
    let norm = Complex64::new((scenario.antennas() as f64).sqrt(), 0.0);
    let mut v = vec![None; plan.num_ssas * l_count];
    for (s, rx) in plan.ssa_rx.iter().enumerate() {
        for &r in rx {
            v[s * l_count + r] = Some(scenario.ssa_steering(s, r) / norm);
        }
    }
    CombinerSet { num_aps: l_count, v }
}

/// Unit-variance complex Gaussian symbols `s_k[m]` and `r_s[m]`.
#[derive(Debug, Clone)]
pub struct SymbolBlock {
    pub tau_s: usize,
    /// Indexed `k * τ_s + m`.
    pub comm: Vec<Complex64>,
    /// Indexed `s * τ_s + m`.
    pub sens: Vec<Complex64>,
}

impl SymbolBlock {
    pub fn comm(&self, k: usize, m: usize) -> Complex64 {
        self.comm[k * self.tau_s + m]
    }
    pub fn sens(&self, s: usize, m: usize) -> Complex64 {
        self.sens[s * self.tau_s + m]
    }
}

pub fn draw_symbols(num_ues: usize, num_ssas: usize, tau_s: usize, rng: &mut StreamRng) -> SymbolBlock {
    let comm = (0..num_ues * tau_s).map(|_| complex_normal(rng)).collect();
    let sens = (0..num_ssas * tau_s).map(|_| complex_normal(rng)).collect();
    SymbolBlock { tau_s, comm, sens }
}

/// `x_l[m]` for every TX-AP (indexed by position in `plan.tx_aps`) and
/// channel use.
#[derive(Debug, Clone)]
pub struct TransmitFrame {
    pub tau_s: usize,
    /// Indexed `li * τ_s + m`.
    pub x: Vec<CVector>,
}

impl TransmitFrame {
    pub fn get(&self, li: usize, m: usize) -> &CVector {
        &self.x[li * self.tau_s + m]
    }
}

/// `x_l[m] = Σ_{k∈U_l} √p_{k,l} w_{k,l} s_k[m] + Σ_{s∈S_l} √q_{s,l} ω_{s,l} r_s[m]`.
pub fn assemble_transmit(
    plan: &AssignmentPlan,
    precoders: &PrecoderSet,
    power: &PowerVector,
    symbols: &SymbolBlock,
    antennas: usize,
) -> Result<TransmitFrame> {
    let mask = PowerVector::support(plan);
    if mask.len() != power.len() {
        return Err(IsacError::Contract("power vector does not match the plan".into()));
    }
    if let Some(i) = (0..mask.len()).find(|&i| !mask[i] && power.rho[i] != 0.0) {
        return Err(IsacError::Contract(format!("non-zero power on unassigned entry {i}")));
    }
    let tau = symbols.tau_s;
    let mut x = Vec::with_capacity(plan.num_tx() * tau);
    for (li, &l) in plan.tx_aps.iter().enumerate() {
        let mut terms: Vec<(&CVector, f64, &[Complex64])> = Vec::new();
        for &k in &plan.ap_ues[l] {
            let w = precoders.comm(k, l).ok_or_else(|| IsacError::Contract(format!("missing precoder ({k}, {l})")))?;
            terms.push((w, power.comm_amp(li, k), &symbols.comm[k * tau..(k + 1) * tau]));
        }
        for &s in &plan.ap_targets[l] {
            let w = precoders.sens(s, l).ok_or_else(|| IsacError::Contract(format!("missing sensing precoder ({s}, {l})")))?;
            terms.push((w, power.sens_amp(li, s), &symbols.sens[s * tau..(s + 1) * tau]));
        }
        for m in 0..tau {
            let mut xm = CVector::zeros(antennas);
            for (w, amp, sym) in &terms {
                if *amp != 0.0 {
                    xm.axpy(sym[m] * *amp, w, Complex64::new(1.0, 0.0));
                }
            }
            x.push(xm);
        }
    }
    Ok(TransmitFrame { tau_s: tau, x })
}

/// `E{x_l x_l^H}` over the symbols, for the `li`-th TX-AP.
pub fn transmit_covariance(plan: &AssignmentPlan, precoders: &PrecoderSet, power: &PowerVector, li: usize, antennas: usize) -> CMatrix {
    let l = plan.tx_aps[li];
    let mut cov = CMatrix::zeros(antennas, antennas);
    for &k in &plan.ap_ues[l] {
        if let Some(w) = precoders.comm(k, l) {
            cov += w * w.adjoint() * Complex64::new(power.comm_amp(li, k).powi(2), 0.0);
        }
    }
    for &s in &plan.ap_targets[l] {
        if let Some(w) = precoders.sens(s, l) {
            cov += w * w.adjoint() * Complex64::new(power.sens_amp(li, s).powi(2), 0.0);
        }
    }
    cov
}

/// `|a^T(φ) ω|²` beam pattern of a transmit vector towards azimuth `phi`.
pub fn beam_gain(w: &CVector, azimuth: f64, elevation: f64) -> f64 {
    array_response(azimuth, elevation, w.len()).dot(w).norm_sqr()
}
