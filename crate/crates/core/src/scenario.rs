//! Simulation geometry and large-scale channel statistics.
//!
//! APs sit on a uniform grid, UEs are dropped uniformly at random and SSA
//! centres are fixed. Communication links follow the 3GPP urban-microcell
//! model (LOS probability, LOS/NLOS path loss, distance-dependent Rician
//! factor) with a local-scattering spatial correlation for the NLOS part.
//! Sensing links (AP↔SSA) are pure LOS free-space links.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::{SystemConfig, UmiParams};
use crate::error::{IsacError, Result};
use crate::linalg::{CMatrix, CVector};
use crate::rng::{self, Purpose};

pub type Point = [f64; 3];

/// ULA response `a(φ, ϑ)` with entries `exp(j m π sin φ cos ϑ)`, `m = 0..M-1`.
pub fn array_response(azimuth: f64, elevation: f64, antennas: usize) -> CVector {
    let phase = PI * azimuth.sin() * elevation.cos();
    CVector::from_fn(antennas, |m, _| Complex64::from_polar(1.0, phase * m as f64))
}

/// One-way free-space gain `(λ / (4π d))²`.
pub fn free_space_gain(distance: f64, carrier_freq: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(IsacError::NonPositiveDistance(distance));
    }
    let lambda = crate::config::SPEED_OF_LIGHT / carrier_freq;
    Ok((lambda / (4.0 * PI * distance)).powi(2))
}

/// Bistatic radar-equation gain `λ² σ² / ((4π)³ d_tx² d_rx²)`.
pub fn two_way_gain(d_tx: f64, d_rx: f64, sigma_rcs2: f64, carrier_freq: f64) -> Result<f64> {
    for d in [d_tx, d_rx] {
        if !(d > 0.0) {
            return Err(IsacError::NonPositiveDistance(d));
        }
    }
    let lambda = crate::config::SPEED_OF_LIGHT / carrier_freq;
    Ok(lambda * lambda * sigma_rcs2 / ((4.0 * PI).powi(3) * d_tx * d_tx * d_rx * d_rx))
}

pub fn los_probability(d2d: f64, umi: &UmiParams) -> f64 {
    let d = d2d.max(umi.min_distance);
    let e = (-d / umi.los_prob_d2).exp();
    (umi.los_prob_d1 / d).min(1.0) * (1.0 - e) + e
}

/// Path loss in dB (positive number) for a 3D distance.
pub fn umi_path_loss_db(d3d: f64, los: bool, carrier_freq: f64, umi: &UmiParams) -> f64 {
    let d = d3d.max(umi.min_distance);
    let f_ghz = carrier_freq / 1e9;
    if los {
        umi.los_slope * d.log10() + umi.los_intercept + umi.los_freq_slope * f_ghz.log10()
    } else {
        umi.nlos_slope * d.log10() + umi.nlos_intercept + umi.nlos_freq_slope * f_ghz.log10()
    }
}

pub fn rician_k_factor(d2d: f64, umi: &UmiParams) -> f64 {
    let k_db = umi.k_intercept_db - umi.k_slope_db_per_m * d2d.max(umi.min_distance);
    10f64.powf(k_db / 10.0)
}

/// Local-scattering correlation with unit diagonal: the average of
/// `a(φ+δ, ϑ) a(φ+δ, ϑ)^H` over a Gaussian azimuth perturbation `δ`.
pub fn local_scattering_corr(azimuth: f64, elevation: f64, spread_rad: f64, antennas: usize) -> CMatrix {
    let lag_value = |lag: i64| -> Complex64 {
        if spread_rad == 0.0 {
            return Complex64::from_polar(1.0, PI * lag as f64 * azimuth.sin() * elevation.cos());
        }
        // trapezoid over ±6σ of the Gaussian density
        let n = 601;
        let half = 6.0 * spread_rad;
        let step = 2.0 * half / (n - 1) as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut wsum = 0.0;
        for i in 0..n {
            let d = -half + step * i as f64;
            let w = (-0.5 * (d / spread_rad).powi(2)).exp() * if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += Complex64::from_polar(w, PI * lag as f64 * (azimuth + d).sin() * elevation.cos());
            wsum += w;
        }
        acc / wsum
    };
    let lags: Vec<Complex64> = (0..antennas as i64).map(lag_value).collect();
    CMatrix::from_fn(antennas, antennas, |m, n| {
        if m >= n {
            lags[m - n]
        } else {
            lags[n - m].conj()
        }
    })
}

fn azimuth_elevation(from: &Point, to: &Point) -> (f64, f64) {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dz = to[2] - from[2];
    let horizontal = (dx * dx + dy * dy).sqrt();
    (dy.atan2(dx), dz.atan2(horizontal))
}

fn dist3(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn dist2(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Large-scale statistics of the AP l → UE k link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommLinkStats {
    /// Per-antenna path gain (linear).
    pub beta: f64,
    pub los: bool,
    /// Linear Rician factor; zero for NLOS links.
    pub rician_k: f64,
    /// LOS component h̄ including path loss.
    pub los_mean: CVector,
    /// NLOS correlation R̃ including path loss.
    pub nlos_corr: CMatrix,
    pub azimuth: f64,
    pub elevation: f64,
}

impl CommLinkStats {
    /// `tr(R̃) + ||h̄||²`, the gain used for UE association.
    pub fn total_gain(&self) -> f64 {
        self.nlos_corr.diagonal().iter().map(|z| z.re).sum::<f64>() + self.los_mean.norm_squared()
    }

    /// Phase-unaware prior covariance `h̄ h̄^H + R̃`.
    pub fn prior_corr(&self) -> CMatrix {
        &self.los_mean * self.los_mean.adjoint() + &self.nlos_corr
    }
}

/// Free-space LOS link between an AP and an SSA centre. Used both for the
/// TX-AP → SSA leg (β_sl, φ_{s,l}, ϑ_{s,l}) and the SSA → RX-AP leg
/// (β̄_sr, φ_{s,r}, θ_{s,r}); the geometry is the same in both roles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensingLinkStats {
    pub beta: f64,
    pub distance: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub ssa_positions: Vec<Point>,
    /// Indexed `k * L + l`.
    comm_links: Vec<CommLinkStats>,
    /// Indexed `s * L + l`.
    ssa_links: Vec<SensingLinkStats>,
    /// Indexed `(s * L + r) * L + l`: TX-AP l → SSA s → RX-AP r.
    two_way: Vec<f64>,
}

impl Scenario {
    /// Builds the world for one UE drop.
    pub fn build(config: &SystemConfig, ue_drop_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(ue_drop_seed, Purpose::UeDrop, 0);
        let ue_positions = (0..config.num_ues)
            .map(|_| {
                [
                    rng::uniform(&mut rng) * config.area_side,
                    rng::uniform(&mut rng) * config.area_side,
                    config.ue_height,
                ]
            })
            .collect();
        Self::with_ue_positions(config, ue_positions, ue_drop_seed)
    }

    /// Builds the world for explicitly given UE positions. The LOS state of
    /// each link is a deterministic function of `(drop_seed, AP, UE position)`,
    /// so co-located UEs see identical links.
    pub fn with_ue_positions(config: &SystemConfig, ue_positions: Vec<Point>, drop_seed: u64) -> Result<Self> {
        config.validate()?;
        if ue_positions.len() != config.num_ues {
            return Err(IsacError::InvalidConfig(format!(
                "expected {} UE positions, got {}",
                config.num_ues,
                ue_positions.len()
            )));
        }
        let side = config.grid_side().ok_or(IsacError::NonSquareGrid(config.num_aps))?;
        let spacing = config.area_side / side as f64;
        let ap_positions: Vec<Point> = (0..config.num_aps)
            .map(|i| {
                let (row, col) = (i / side, i % side);
                [(col as f64 + 0.5) * spacing, (row as f64 + 0.5) * spacing, config.ap_height]
            })
            .collect();
        let ssa_positions: Vec<Point> = config.ssa_positions[..config.num_ssas]
            .iter()
            .map(|p| [p[0], p[1], config.target_height])
            .collect();

        let l_count = config.num_aps;
        let m = config.antennas;
        let spread = config.azimuth_spread_deg.to_radians();
        let mut comm_links = Vec::with_capacity(config.num_ues * l_count);
        for ue in &ue_positions {
            for (l, ap) in ap_positions.iter().enumerate() {
                comm_links.push(comm_link(config, ap, ue, link_uniform(drop_seed, l, ue), m, spread));
            }
        }

        let mut ssa_links = Vec::with_capacity(config.num_ssas * l_count);
        for ssa in &ssa_positions {
            for ap in &ap_positions {
                let distance = dist3(ap, ssa);
                let (azimuth, elevation) = azimuth_elevation(ap, ssa);
                ssa_links.push(SensingLinkStats {
                    beta: free_space_gain(distance, config.carrier_freq)?,
                    distance,
                    azimuth,
                    elevation,
                });
            }
        }

        let mut two_way = Vec::with_capacity(config.num_ssas * l_count * l_count);
        for s in 0..config.num_ssas {
            for r in 0..l_count {
                for l in 0..l_count {
                    two_way.push(two_way_gain(
                        ssa_links[s * l_count + l].distance,
                        ssa_links[s * l_count + r].distance,
                        config.sigma_rcs2,
                        config.carrier_freq,
                    )?);
                }
            }
        }

        Ok(Self {
            config: config.clone(),
            ap_positions,
            ue_positions,
            ssa_positions,
            comm_links,
            ssa_links,
            two_way,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.config.num_aps
    }
    pub fn num_ues(&self) -> usize {
        self.config.num_ues
    }
    pub fn num_ssas(&self) -> usize {
        self.config.num_ssas
    }
    pub fn antennas(&self) -> usize {
        self.config.antennas
    }

    pub fn comm_link(&self, k: usize, l: usize) -> &CommLinkStats {
        &self.comm_links[k * self.config.num_aps + l]
    }

    /// β_{l,k}: total large-scale gain of the AP l → UE k link.
    pub fn comm_gain(&self, k: usize, l: usize) -> f64 {
        self.comm_link(k, l).total_gain()
    }

    /// AP l ↔ SSA s link; use as the TX leg (β_sl) or RX leg (β̄_sr).
    pub fn ssa_link(&self, s: usize, l: usize) -> &SensingLinkStats {
        &self.ssa_links[s * self.config.num_aps + l]
    }

    /// β_{s,r,l}.
    pub fn two_way_gain(&self, s: usize, r: usize, l: usize) -> f64 {
        let n = self.config.num_aps;
        self.two_way[(s * n + r) * n + l]
    }

    /// `a(φ_{s,l}, ϑ_{s,l})`, the steering vector from AP l towards SSA s.
    pub fn ssa_steering(&self, s: usize, l: usize) -> CVector {
        let link = self.ssa_link(s, l);
        array_response(link.azimuth, link.elevation, self.config.antennas)
    }
}

/// Uniform variate tied to a link's location, used for its LOS draw.
fn link_uniform(seed: u64, ap: usize, ue: &Point) -> f64 {
    let bits = ue[0].to_bits() ^ ue[1].to_bits().rotate_left(21) ^ ue[2].to_bits().rotate_left(42);
    let mut r = rng::stream(rng::derive_seed(seed, Purpose::UeDrop, bits), Purpose::UeDrop, ap as u64 + 1);
    rng::uniform(&mut r)
}

fn comm_link(config: &SystemConfig, ap: &Point, ue: &Point, u: f64, m: usize, spread: f64) -> CommLinkStats {
    let umi = &config.umi;
    let d2 = dist2(ap, ue);
    let d3 = dist3(ap, ue);
    let los = u < los_probability(d2, umi);
    let beta = 10f64.powf(-umi_path_loss_db(d3, los, config.carrier_freq, umi) / 10.0);
    let rician_k = if los { rician_k_factor(d2, umi) } else { 0.0 };
    let (azimuth, elevation) = azimuth_elevation(ap, ue);
    let los_amp = (beta * rician_k / (rician_k + 1.0)).sqrt();
    let nlos_power = beta / (rician_k + 1.0);
    let los_mean = if los {
        array_response(azimuth, elevation, m) * Complex64::new(los_amp, 0.0)
    } else {
        DVector::zeros(m)
    };
    let nlos_corr = local_scattering_corr(azimuth, elevation, spread, m) * Complex64::new(nlos_power, 0.0);
    CommLinkStats { beta, los, rician_k, los_mean, nlos_corr, azimuth, elevation }
}
