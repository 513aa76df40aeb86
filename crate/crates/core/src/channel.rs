//! Small-scale channel draws, pilot-based LMMSE estimation, two-way sensing
//! channels and Swerling-I RCS realisations.

use num_complex::Complex64;
use std::sync::Arc;

use crate::error::{IsacError, Result};
use crate::linalg::{hermitian_psd_sqrt, CMatrix, CVector, C0};
use crate::rng::{complex_normal, uniform_phase, StreamRng};
use crate::scenario::Scenario;

/// Per-link quantities that depend only on large-scale statistics and are
/// reused across every channel realisation of a setup.
#[derive(Debug, Clone)]
pub struct ChannelStatistics {
    num_aps: usize,
    num_ues: usize,
    antennas: usize,
    los_mean: Vec<CVector>,
    nlos_sqrt: Vec<CMatrix>,
    /// `R (R + ν I)^{-1}` with `ν = σ_n² / (p_ul τ_p)`.
    estimator: Vec<CMatrix>,
    /// Error correlation `Z = R - R (R + ν I)^{-1} R`.
    err_corr: Arc<Vec<CMatrix>>,
    /// Pilot-despread noise standard deviation `sqrt(ν)`.
    pilot_noise_std: f64,
}

impl ChannelStatistics {
    /// Orthogonal pilots with `τ_p = K`.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let cfg = &scenario.config;
        let (l_count, k_count, m) = (cfg.num_aps, cfg.num_ues, cfg.antennas);
        let tau_p = k_count as f64;
        let nu = cfg.sigma_n2 / (cfg.p_ul * tau_p);
        let mut los_mean = Vec::with_capacity(k_count * l_count);
        let mut nlos_sqrt = Vec::with_capacity(k_count * l_count);
        let mut estimator = Vec::with_capacity(k_count * l_count);
        let mut err_corr = Vec::with_capacity(k_count * l_count);
        for k in 0..k_count {
            for l in 0..l_count {
                let link = scenario.comm_link(k, l);
                los_mean.push(link.los_mean.clone());
                nlos_sqrt.push(hermitian_psd_sqrt(&link.nlos_corr, &format!("NLOS correlation of UE {k}, AP {l}"))?);
                let (phi, z) = lmmse_matrices(&link.prior_corr(), nu);
                estimator.push(phi);
                err_corr.push(z);
            }
        }
        Ok(Self {
            num_aps: l_count,
            num_ues: k_count,
            antennas: m,
            los_mean,
            nlos_sqrt,
            estimator,
            err_corr: Arc::new(err_corr),
            pilot_noise_std: nu.sqrt(),
        })
    }

    pub fn err_corr(&self, k: usize, l: usize) -> &CMatrix {
        &self.err_corr[k * self.num_aps + l]
    }
}

/// Returns `(R (R + νI)^{-1}, R - R (R + νI)^{-1} R)`.
pub fn lmmse_matrices(prior: &CMatrix, nu: f64) -> (CMatrix, CMatrix) {
    let n = prior.nrows();
    let reg = prior + CMatrix::identity(n, n) * Complex64::new(nu, 0.0);
    // reg is Hermitian PD for nu > 0
    let inv = reg
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| reg.try_inverse().expect("regularised prior is invertible"));
    let phi = prior * &inv;
    let z = prior - &phi * prior;
    (phi, crate::linalg::hermitian_part(&z))
}

/// One realisation of all AP–UE channels, indexed `k * L + l`.
#[derive(Debug, Clone)]
pub struct CommChannelSet {
    pub num_aps: usize,
    pub h: Vec<CVector>,
    pub psi: Vec<f64>,
}

impl CommChannelSet {
    pub fn get(&self, k: usize, l: usize) -> &CVector {
        &self.h[k * self.num_aps + l]
    }
}

/// Draws `h_kl = e^{jψ_kl} h̄_kl + h̃_kl` with `ψ ~ U[0, 2π)` and
/// `h̃ ~ CN(0, R̃)`.
pub fn draw_comm_channels(stats: &ChannelStatistics, rng: &mut StreamRng) -> CommChannelSet {
    let n = stats.num_aps * stats.num_ues;
    let m = stats.antennas;
    let mut h = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    for i in 0..n {
        let phase = uniform_phase(rng);
        let z = CVector::from_fn(m, |_, _| complex_normal(rng));
        let mut hk = &stats.nlos_sqrt[i] * z;
        hk.axpy(Complex64::from_polar(1.0, phase), &stats.los_mean[i], Complex64::new(1.0, 0.0));
        h.push(hk);
        psi.push(phase);
    }
    CommChannelSet { num_aps: stats.num_aps, h, psi }
}

/// LMMSE estimates plus the (realisation-independent) error correlations.
#[derive(Debug, Clone)]
pub struct ChannelEstimateSet {
    pub num_aps: usize,
    pub h_hat: Vec<CVector>,
    pub err_corr: Arc<Vec<CMatrix>>,
}

impl ChannelEstimateSet {
    pub fn get(&self, k: usize, l: usize) -> &CVector {
        &self.h_hat[k * self.num_aps + l]
    }
    pub fn err(&self, k: usize, l: usize) -> &CMatrix {
        &self.err_corr[k * self.num_aps + l]
    }
}

/// Phase-unaware LMMSE estimation from the pilot-despread observation
/// `y = h + n`, `n ~ CN(0, σ_n²/(p_ul τ_p) I)`.
pub fn estimate_channels(channels: &CommChannelSet, stats: &ChannelStatistics, rng: &mut StreamRng) -> ChannelEstimateSet {
    let m = stats.antennas;
    let h_hat = channels
        .h
        .iter()
        .zip(&stats.estimator)
        .map(|(h, phi)| {
            let y = h + CVector::from_fn(m, |_, _| complex_normal(rng) * stats.pilot_noise_std);
            phi * y
        })
        .collect();
    ChannelEstimateSet { num_aps: stats.num_aps, h_hat, err_corr: Arc::clone(&stats.err_corr) }
}

/// Rank-one two-way channels `G_{s,r,l} = sqrt(β_{s,r,l}) a(φ_{s,r}, θ_{s,r}) a^T(φ_{s,l}, ϑ_{s,l})`,
/// kept in factored form.
#[derive(Debug, Clone)]
pub struct TwoWayChannelSet {
    num_aps: usize,
    /// `a(φ_{s,l}, ϑ_{s,l})`, indexed `s * L + l`.
    steering: Vec<CVector>,
    /// `sqrt(β_{s,r,l})`, indexed `(s * L + r) * L + l`.
    gain_sqrt: Vec<f64>,
}

pub fn build_two_way_channels(scenario: &Scenario) -> TwoWayChannelSet {
    let (s_count, l_count) = (scenario.num_ssas(), scenario.num_aps());
    let mut steering = Vec::with_capacity(s_count * l_count);
    let mut gain_sqrt = Vec::with_capacity(s_count * l_count * l_count);
    for s in 0..s_count {
        for l in 0..l_count {
            steering.push(scenario.ssa_steering(s, l));
        }
        for r in 0..l_count {
            for l in 0..l_count {
                gain_sqrt.push(scenario.two_way_gain(s, r, l).sqrt());
            }
        }
    }
    TwoWayChannelSet { num_aps: l_count, steering, gain_sqrt }
}

impl TwoWayChannelSet {
    /// Builds a set from raw factors: `steering[s * L + l]` and
    /// `gain_sqrt[(s * L + r) * L + l]`.
    pub fn from_parts(num_aps: usize, steering: Vec<CVector>, gain_sqrt: Vec<f64>) -> Result<Self> {
        let ns = steering.len() / num_aps.max(1);
        if num_aps == 0 || steering.len() != ns * num_aps || gain_sqrt.len() != ns * num_aps * num_aps {
            return Err(IsacError::Contract("two-way factor lengths do not match the AP count".into()));
        }
        Ok(Self { num_aps, steering, gain_sqrt })
    }

    /// Steering vector from AP `ap` towards SSA `s` (TX and RX legs share it).
    pub fn steering(&self, s: usize, ap: usize) -> &CVector {
        &self.steering[s * self.num_aps + ap]
    }

    pub fn gain_sqrt(&self, s: usize, r: usize, l: usize) -> f64 {
        self.gain_sqrt[(s * self.num_aps + r) * self.num_aps + l]
    }

    /// The full M×M matrix `G_{s,r,l}`.
    pub fn matrix(&self, s: usize, r: usize, l: usize) -> CMatrix {
        self.steering(s, r) * self.steering(s, l).transpose() * Complex64::new(self.gain_sqrt(s, r, l), 0.0)
    }

    /// `v^H G_{s,r,l} x` evaluated through the rank-one factors.
    pub fn project(&self, s: usize, r: usize, l: usize, v: &CVector, x: &CVector) -> Complex64 {
        let rx = v.dotc(self.steering(s, r));
        let tx = self.steering(s, l).dot(x);
        rx * tx * self.gain_sqrt(s, r, l)
    }
}

/// Normalised RCS draws `α_{s,r,l}` for SSA `s`, RX-AP `rx_aps[ri]` and
/// TX-AP `tx_aps[li]`, indexed `(s * n_rx + ri) * n_tx + li`.
#[derive(Debug, Clone)]
pub struct RcsRealization {
    pub n_rx: usize,
    pub n_tx: usize,
    pub alpha: Vec<Complex64>,
}

impl RcsRealization {
    pub fn get(&self, s: usize, ri: usize, li: usize) -> Complex64 {
        self.alpha[(s * self.n_rx + ri) * self.n_tx + li]
    }
}

/// Draws α_{s,r} = R^{1/2} z with z ~ CN(0, I) for every SSA and RX-AP.
/// `corr_sqrt = None` means `R^rcs = I` (i.i.d. Swerling-I draws).
pub fn draw_rcs(num_ssas: usize, n_rx: usize, n_tx: usize, corr_sqrt: Option<&CMatrix>, rng: &mut StreamRng) -> RcsRealization {
    let mut alpha = Vec::with_capacity(num_ssas * n_rx * n_tx);
    for _ in 0..num_ssas * n_rx {
        let z = CVector::from_fn(n_tx, |_, _| complex_normal(rng));
        match corr_sqrt {
            None => alpha.extend(z.iter()),
            Some(f) => alpha.extend((f * z).iter()),
        }
    }
    RcsRealization { n_rx, n_tx, alpha }
}

/// Square-root factor of an RCS correlation matrix, for [`draw_rcs`].
pub fn rcs_corr_sqrt(corr: &CMatrix) -> Result<CMatrix> {
    hermitian_psd_sqrt(corr, "RCS correlation")
}

/// Zero vector helper for absent precoders.
pub fn zeros(m: usize) -> CVector {
    CVector::from_element(m, C0)
}
