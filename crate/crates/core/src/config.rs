//! System configuration. Every physical constant can be overridden from JSON;
//! omitted fields fall back to the desk-scale defaults below.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{IsacError, Result};
use crate::linalg::from_db;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 3GPP urban-microcell constants. Path loss in dB with `d` in meters and
/// `f` in GHz:
/// LOS `los_slope*log10(d) + los_intercept + los_freq_slope*log10(f)`,
/// NLOS `nlos_slope*log10(d) + nlos_intercept + nlos_freq_slope*log10(f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmiParams {
    pub los_slope: f64,
    pub los_intercept: f64,
    pub los_freq_slope: f64,
    pub nlos_slope: f64,
    pub nlos_intercept: f64,
    pub nlos_freq_slope: f64,
    /// `P_LOS(d) = min(d1/d, 1) (1 - e^{-d/d2}) + e^{-d/d2}`.
    pub los_prob_d1: f64,
    pub los_prob_d2: f64,
    /// Rician factor `K_dB = k_intercept_db - k_slope_db_per_m * d`.
    pub k_intercept_db: f64,
    pub k_slope_db_per_m: f64,
    /// Distances are clamped from below to this value before use.
    pub min_distance: f64,
}

impl Default for UmiParams {
    fn default() -> Self {
        Self {
            los_slope: 22.0,
            los_intercept: 28.0,
            los_freq_slope: 20.0,
            nlos_slope: 36.7,
            nlos_intercept: 22.7,
            nlos_freq_slope: 26.0,
            los_prob_d1: 18.0,
            los_prob_d2: 36.0,
            k_intercept_db: 13.0,
            k_slope_db_per_m: 0.03,
            min_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Number of APs (L); laid out on a square grid.
    #[serde(alias = "L")]
    pub num_aps: usize,
    /// Antennas per AP (M), half-wavelength ULA.
    #[serde(alias = "M")]
    pub antennas: usize,
    /// Number of single-antenna UEs (K).
    #[serde(alias = "K")]
    pub num_ues: usize,
    /// Number of sensing service areas (S).
    #[serde(alias = "S")]
    pub num_ssas: usize,
    /// TX-APs per SSA (T).
    #[serde(alias = "T")]
    pub tx_per_ssa: usize,
    /// RX-APs per SSA (R).
    #[serde(alias = "R")]
    pub rx_per_ssa: usize,
    /// Side of the square deployment area in meters.
    pub area_side: f64,
    /// Per-AP maximum transmit power in watts.
    pub p_tx: f64,
    /// Uplink pilot power in watts.
    pub p_ul: f64,
    /// Noise variance in watts.
    pub sigma_n2: f64,
    /// RCS variance in m² (linear).
    pub sigma_rcs2: f64,
    /// Channel uses per sensing block.
    pub tau_s: usize,
    /// UE association threshold relative to the noise variance (linear).
    pub beta_th_over_noise: f64,
    pub carrier_freq: f64,
    pub rng_seed: u64,
    pub ap_height: f64,
    pub ue_height: f64,
    pub target_height: f64,
    /// Candidate SSA centres (x, y) in meters; the first `num_ssas` are used.
    pub ssa_positions: Vec<[f64; 2]>,
    /// Standard deviation of the Gaussian azimuth spread of the NLOS
    /// local-scattering model, in degrees.
    pub azimuth_spread_deg: f64,
    pub umi: UmiParams,
}

/// Thermal noise over 20 MHz with a 7 dB noise figure: −174 dBm/Hz + 73 dB + 7 dB.
pub fn default_noise_variance() -> f64 {
    let dbm = -174.0 + 10.0 * (20e6f64).log10() + 7.0;
    from_db(dbm) * 1e-3
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 25,
            antennas: 4,
            num_ues: 8,
            num_ssas: 4,
            tx_per_ssa: 1,
            rx_per_ssa: 1,
            area_side: 500.0,
            p_tx: 1.0,
            p_ul: 0.2,
            sigma_n2: default_noise_variance(),
            sigma_rcs2: from_db(-5.0),
            tau_s: 20,
            beta_th_over_noise: 80_000.0,
            carrier_freq: 2e9,
            rng_seed: 1,
            ap_height: 10.0,
            ue_height: 1.5,
            target_height: 1.5,
            ssa_positions: vec![[125.0, 125.0], [125.0, 375.0], [375.0, 125.0], [375.0, 375.0]],
            azimuth_spread_deg: 15.0,
            umi: UmiParams::default(),
        }
    }
}

impl SystemConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Absolute UE association threshold β_th.
    pub fn beta_th(&self) -> f64 {
        self.beta_th_over_noise * self.sigma_n2
    }

    /// Side length of the AP grid, if `num_aps` is a perfect square.
    pub fn grid_side(&self) -> Option<usize> {
        let s = (self.num_aps as f64).sqrt().round() as usize;
        (s * s == self.num_aps).then_some(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(IsacError::InvalidConfig(m.to_string()));
        if self.num_aps == 0 || self.antennas == 0 || self.num_ues == 0 || self.num_ssas == 0 {
            return bad("L, M, K and S must be at least 1");
        }
        if self.tx_per_ssa == 0 || self.rx_per_ssa == 0 {
            return bad("T and R must be at least 1");
        }
        if self.tau_s == 0 {
            return bad("tau_s must be at least 1");
        }
        if self.num_aps < 2 * self.num_ssas {
            return bad("need L >= 2S so every SSA gets a distinct first RX-AP and TX-AP");
        }
        if self.ssa_positions.len() < self.num_ssas {
            return bad("fewer SSA positions than SSAs");
        }
        let positive = [
            ("area_side", self.area_side),
            ("p_tx", self.p_tx),
            ("p_ul", self.p_ul),
            ("sigma_n2", self.sigma_n2),
            ("sigma_rcs2", self.sigma_rcs2),
            ("carrier_freq", self.carrier_freq),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(IsacError::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.beta_th_over_noise < 0.0 || self.azimuth_spread_deg < 0.0 {
            return bad("beta_th_over_noise and azimuth_spread_deg must be non-negative");
        }
        if self.grid_side().is_none() {
            return Err(IsacError::NonSquareGrid(self.num_aps));
        }
        Ok(())
    }
}
