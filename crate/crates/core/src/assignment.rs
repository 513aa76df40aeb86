//! Heuristic AP mode selection and user-centric UE association.
//!
//! Sensing roles are handed out greedily per SSA from one-way SSA→AP gains:
//! the strongest free AP becomes the first RX-AP, the next strongest the
//! first TX-AP, then further RX-APs and TX-APs are added. UEs are then
//! associated with non-RX APs in descending gain order until their
//! cumulative gain reaches a threshold.
//!
//! Ties are broken by ascending AP index and SSAs/UEs are processed in
//! ascending index order everywhere.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::error::{IsacError, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub num_aps: usize,
    pub num_ues: usize,
    pub num_ssas: usize,
    /// ISAC TX-APs, ascending. Their order defines the block order of the
    /// power vector.
    pub tx_aps: Vec<usize>,
    pub rx_aps: Vec<usize>,
    pub idle_aps: Vec<usize>,
    /// M_k: TX-APs serving UE k, ascending.
    pub serving_sets: Vec<Vec<usize>>,
    /// T_s, in selection order.
    pub ssa_tx: Vec<Vec<usize>>,
    /// R_s, in selection order (the first entry is the strongest RX-AP).
    pub ssa_rx: Vec<Vec<usize>>,
    /// U_l per AP index (empty unless the AP transmits).
    pub ap_ues: Vec<Vec<usize>>,
    /// S_l per AP index (empty unless the AP transmits).
    pub ap_targets: Vec<Vec<usize>>,
}

impl AssignmentPlan {
    pub fn num_tx(&self) -> usize {
        self.tx_aps.len()
    }

    /// Position of AP `l` within `tx_aps`.
    pub fn tx_index(&self, l: usize) -> Option<usize> {
        self.tx_aps.binary_search(&l).ok()
    }

    pub fn rx_index(&self, r: usize) -> Option<usize> {
        self.rx_aps.binary_search(&r).ok()
    }

    /// η_{k,l}.
    pub fn serves_ue(&self, l: usize, k: usize) -> bool {
        self.ap_ues[l].contains(&k)
    }

    /// ζ_{s,l}.
    pub fn serves_ssa(&self, l: usize, s: usize) -> bool {
        self.ap_targets[l].contains(&s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.check_invariants()?;
        Ok(plan)
    }

    /// Verifies the partition, cardinality and bidirectional-consistency
    /// invariants of a completed plan.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(IsacError::Contract(m));
        let mut seen = vec![0u8; self.num_aps];
        for &l in self.tx_aps.iter().chain(&self.rx_aps).chain(&self.idle_aps) {
            if l >= self.num_aps {
                return fail(format!("AP index {l} out of range"));
            }
            seen[l] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return fail("TX/RX/idle sets do not partition the APs".into());
        }
        for s in 0..self.num_ssas {
            if self.ssa_tx[s].iter().any(|l| self.tx_index(*l).is_none()) {
                return fail(format!("T_{s} contains a non-TX AP"));
            }
            if self.ssa_rx[s].iter().any(|r| self.rx_index(*r).is_none()) {
                return fail(format!("R_{s} contains a non-RX AP"));
            }
        }
        for l in 0..self.num_aps {
            let is_tx = self.tx_index(l).is_some();
            if !is_tx && (!self.ap_ues[l].is_empty() || !self.ap_targets[l].is_empty()) {
                return fail(format!("non-TX AP {l} has UEs or targets"));
            }
            for k in 0..self.num_ues {
                if self.ap_ues[l].contains(&k) != self.serving_sets[k].contains(&l) {
                    return fail(format!("U_{l} and M_{k} disagree"));
                }
            }
            for s in 0..self.num_ssas {
                if self.ap_targets[l].contains(&s) != self.ssa_tx[s].contains(&l) {
                    return fail(format!("S_{l} and T_{s} disagree"));
                }
            }
        }
        for (k, m) in self.serving_sets.iter().enumerate() {
            if m.is_empty() {
                return fail(format!("UE {k} has no serving AP"));
            }
        }
        Ok(())
    }
}

/// Sorts candidate APs by descending gain, ascending index on ties.
fn ranked(candidates: impl IntoIterator<Item = usize>, gain: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut v: Vec<usize> = candidates.into_iter().collect();
    v.sort_by(|&a, &b| gain(b).partial_cmp(&gain(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    v
}

/// Sensing mode selection from a table `gains[s][l]` of SSA→AP gains.
/// Returns a plan whose UE-related sets are still empty.
pub fn select_modes_from_gains(gains: &[Vec<f64>], num_ues: usize, t: usize, r: usize) -> Result<AssignmentPlan> {
    let num_ssas = gains.len();
    let num_aps = gains.first().map_or(0, |g| g.len());
    if t == 0 || r == 0 {
        return Err(IsacError::InvalidConfig("T and R must be at least 1".into()));
    }
    let mut idle: BTreeSet<usize> = (0..num_aps).collect();
    let mut tx: BTreeSet<usize> = BTreeSet::new();
    let mut rx: BTreeSet<usize> = BTreeSet::new();
    let mut ssa_tx = vec![Vec::new(); num_ssas];
    let mut ssa_rx = vec![Vec::new(); num_ssas];
    let infeasible = |ssa: usize, reason: &str| IsacError::Infeasible { ssa, reason: reason.to_string() };

    // first RX-AP per SSA
    for s in 0..num_ssas {
        let best = *ranked(idle.iter().copied(), |l| gains[s][l])
            .first()
            .ok_or_else(|| infeasible(s, "no idle AP left for the first RX-AP"))?;
        idle.remove(&best);
        rx.insert(best);
        ssa_rx[s].push(best);
    }
    // first TX-AP per SSA
    for s in 0..num_ssas {
        let best = *ranked(idle.iter().copied(), |l| gains[s][l])
            .first()
            .ok_or_else(|| infeasible(s, "no idle AP left for the first TX-AP"))?;
        idle.remove(&best);
        tx.insert(best);
        ssa_tx[s].push(best);
    }
    // remaining R-1 RX-APs, drawn from the idle pool as it stood after the
    // first TX-APs; the pool is only pruned after every SSA has chosen, so
    // two SSAs may share an additional RX-AP
    let pool = idle.clone();
    for s in 0..num_ssas {
        let extra = ranked(pool.iter().copied(), |l| gains[s][l]);
        if extra.len() < r - 1 {
            return Err(infeasible(s, &format!("only {} idle APs for {} additional RX-APs", extra.len(), r - 1)));
        }
        for &l in &extra[..r - 1] {
            rx.insert(l);
            ssa_rx[s].push(l);
        }
    }
    idle.retain(|l| !rx.contains(l));
    // remaining T-1 TX-APs from idle ∪ existing TX-APs
    for s in 0..num_ssas {
        let candidates = idle.iter().chain(tx.iter()).copied().filter(|l| !ssa_tx[s].contains(l));
        let extra = ranked(candidates, |l| gains[s][l]);
        if extra.len() < t - 1 {
            return Err(infeasible(s, &format!("only {} candidate APs for {} additional TX-APs", extra.len(), t - 1)));
        }
        for &l in &extra[..t - 1] {
            idle.remove(&l);
            tx.insert(l);
            ssa_tx[s].push(l);
        }
    }

    let mut plan = AssignmentPlan {
        num_aps,
        num_ues,
        num_ssas,
        tx_aps: tx.into_iter().collect(),
        rx_aps: rx.into_iter().collect(),
        idle_aps: idle.into_iter().collect(),
        serving_sets: vec![Vec::new(); num_ues],
        ssa_tx,
        ssa_rx,
        ap_ues: vec![Vec::new(); num_aps],
        ap_targets: vec![Vec::new(); num_aps],
    };
    fill_ap_sets(&mut plan);
    Ok(plan)
}

/// User-centric association from a table `ue_gains[k][l]` of β_{l,k}.
pub fn associate_from_gains(plan: &AssignmentPlan, ue_gains: &[Vec<f64>], beta_th: f64) -> AssignmentPlan {
    let mut plan = plan.clone();
    let candidates: Vec<usize> = plan.tx_aps.iter().chain(&plan.idle_aps).copied().collect();
    let mut recruited = BTreeSet::new();
    for (k, gains) in ue_gains.iter().enumerate().take(plan.num_ues) {
        let order = ranked(candidates.iter().copied(), |l| gains[l]);
        let mut serving = Vec::new();
        let mut total = 0.0;
        for (i, &l) in order.iter().enumerate() {
            // master AP always; the rest while below threshold
            if i == 0 || total < beta_th {
                serving.push(l);
                total += gains[l];
                recruited.insert(l);
            } else {
                break;
            }
        }
        serving.sort_unstable();
        plan.serving_sets[k] = serving;
    }
    let mut tx: BTreeSet<usize> = plan.tx_aps.iter().copied().collect();
    tx.extend(recruited);
    plan.idle_aps.retain(|l| !tx.contains(l));
    plan.tx_aps = tx.into_iter().collect();
    fill_ap_sets(&mut plan);
    plan
}

fn fill_ap_sets(plan: &mut AssignmentPlan) {
    plan.ap_ues = vec![Vec::new(); plan.num_aps];
    plan.ap_targets = vec![Vec::new(); plan.num_aps];
    for (k, m) in plan.serving_sets.iter().enumerate() {
        for &l in m {
            plan.ap_ues[l].push(k);
        }
    }
    for (s, t) in plan.ssa_tx.iter().enumerate() {
        for &l in t {
            plan.ap_targets[l].push(s);
        }
    }
}

/// Sensing mode selection on a scenario, ranking APs by the one-way
/// free-space SSA→AP gain.
pub fn select_ap_modes(scenario: &Scenario, t: usize, r: usize) -> Result<AssignmentPlan> {
    let gains: Vec<Vec<f64>> = (0..scenario.num_ssas())
        .map(|s| (0..scenario.num_aps()).map(|l| scenario.ssa_link(s, l).beta).collect())
        .collect();
    select_modes_from_gains(&gains, scenario.num_ues(), t, r)
}

pub fn associate_ues(scenario: &Scenario, plan: &AssignmentPlan, beta_th: f64) -> AssignmentPlan {
    let gains: Vec<Vec<f64>> = (0..scenario.num_ues())
        .map(|k| (0..scenario.num_aps()).map(|l| scenario.comm_gain(k, l)).collect())
        .collect();
    associate_from_gains(plan, &gains, beta_th)
}

/// Full assignment with the configured T, R and β_th.
pub fn assign(scenario: &Scenario) -> Result<AssignmentPlan> {
    let cfg = &scenario.config;
    let partial = select_ap_modes(scenario, cfg.tx_per_ssa, cfg.rx_per_ssa)?;
    let plan = associate_ues(scenario, &partial, cfg.beta_th());
    plan.check_invariants()?;
    Ok(plan)
}
