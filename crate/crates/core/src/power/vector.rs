use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPlan;
use crate::error::{IsacError, Result};
use crate::rng::StreamRng;

/// Amplitude coefficients ρ ∈ R^{(K+S)·L_tx}. Block `li` (the `li`-th TX-AP
/// in ascending AP order) holds `[√p_{1,l} .. √p_{K,l}, √q_{1,l} .. √q_{S,l}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector {
    pub num_ues: usize,
    pub num_ssas: usize,
    pub num_tx: usize,
    pub rho: DVector<f64>,
}

impl PowerVector {
    pub fn zeros(num_ues: usize, num_ssas: usize, num_tx: usize) -> Self {
        Self { num_ues, num_ssas, num_tx, rho: DVector::zeros((num_ues + num_ssas) * num_tx) }
    }

    pub fn for_plan(plan: &AssignmentPlan) -> Self {
        Self::zeros(plan.num_ues, plan.num_ssas, plan.num_tx())
    }

    pub fn block_len(&self) -> usize {
        self.num_ues + self.num_ssas
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn comm_index(&self, li: usize, k: usize) -> usize {
        li * self.block_len() + k
    }

    pub fn sens_index(&self, li: usize, s: usize) -> usize {
        li * self.block_len() + self.num_ues + s
    }

    /// √p_{k,l} for the `li`-th TX-AP.
    pub fn comm_amp(&self, li: usize, k: usize) -> f64 {
        self.rho[self.comm_index(li, k)]
    }

    /// √q_{s,l} for the `li`-th TX-AP.
    pub fn sens_amp(&self, li: usize, s: usize) -> f64 {
        self.rho[self.sens_index(li, s)]
    }

    /// ρ_k ∈ R^{L_tx}.
    pub fn ue_slice(&self, k: usize) -> DVector<f64> {
        DVector::from_fn(self.num_tx, |li, _| self.comm_amp(li, k))
    }

    /// q_s ∈ R^{L_tx}.
    pub fn ssa_slice(&self, s: usize) -> DVector<f64> {
        DVector::from_fn(self.num_tx, |li, _| self.sens_amp(li, s))
    }

    /// Transmit power Σ_k p_{k,l} + Σ_s q_{s,l} of the `li`-th TX-AP.
    pub fn ap_power(&self, li: usize) -> f64 {
        let b = self.block_len();
        self.rho.rows(li * b, b).norm_squared()
    }

    /// Indicator of the entries allowed to be non-zero (η_{k,l}, ζ_{s,l}).
    pub fn support(plan: &AssignmentPlan) -> Vec<bool> {
        let v = Self::for_plan(plan);
        let mut mask = vec![false; v.len()];
        for (li, &l) in plan.tx_aps.iter().enumerate() {
            for &k in &plan.ap_ues[l] {
                mask[v.comm_index(li, k)] = true;
            }
            for &s in &plan.ap_targets[l] {
                mask[v.sens_index(li, s)] = true;
            }
        }
        mask
    }

    /// Equal power split over each TX-AP's assigned UEs and SSAs.
    pub fn equal_split(plan: &AssignmentPlan, p_tx: f64) -> Self {
        let mut v = Self::for_plan(plan);
        for (li, &l) in plan.tx_aps.iter().enumerate() {
            let n = plan.ap_ues[l].len() + plan.ap_targets[l].len();
            if n == 0 {
                continue;
            }
            let amp = (p_tx / n as f64).sqrt();
            for &k in &plan.ap_ues[l] {
                let i = v.comm_index(li, k);
                v.rho[i] = amp;
            }
            for &s in &plan.ap_targets[l] {
                let i = v.sens_index(li, s);
                v.rho[i] = amp;
            }
        }
        v
    }

    /// Random feasible split: per TX-AP, Dirichlet(1, …, 1) power shares over
    /// the assigned entries.
    pub fn random_split(plan: &AssignmentPlan, p_tx: f64, rng: &mut StreamRng) -> Self {
        use rand_distr::{Distribution, Exp1};
        let mut v = Self::for_plan(plan);
        let mask = Self::support(plan);
        let b = v.block_len();
        for li in 0..plan.num_tx() {
            let idx: Vec<usize> = (li * b..(li + 1) * b).filter(|&i| mask[i]).collect();
            let draws: Vec<f64> = idx.iter().map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            for (&i, d) in idx.iter().zip(draws) {
                v.rho[i] = (p_tx * d / total).sqrt();
            }
        }
        v
    }

    /// Checks non-negativity, support and per-AP power (with relative
    /// tolerance `tol`).
    pub fn check(&self, plan: &AssignmentPlan, p_tx: f64, tol: f64) -> Result<()> {
        if self.num_tx != plan.num_tx() || self.num_ues != plan.num_ues || self.num_ssas != plan.num_ssas {
            return Err(IsacError::Contract("power vector dimensions do not match the plan".into()));
        }
        let mask = Self::support(plan);
        for (i, (&x, &allowed)) in self.rho.iter().zip(&mask).enumerate() {
            if x < 0.0 || !x.is_finite() {
                return Err(IsacError::Contract(format!("power entry {i} is negative or not finite: {x}")));
            }
            if !allowed && x != 0.0 {
                return Err(IsacError::Contract(format!("non-zero power {x} on unassigned entry {i}")));
            }
        }
        for li in 0..self.num_tx {
            let p = self.ap_power(li);
            if p > p_tx * (1.0 + tol) {
                return Err(IsacError::Contract(format!("TX-AP #{li} exceeds its power budget: {p} > {p_tx}")));
            }
        }
        Ok(())
    }
}
