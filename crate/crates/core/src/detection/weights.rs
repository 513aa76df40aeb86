//! Channel-aware weights for fusing local statistics, and the fusion itself.

use crate::assignment::AssignmentPlan;
use crate::beamforming::CombinerSet;
use crate::scenario::Scenario;
use crate::sinr::sensing_pairs;

/// Floor on the interference term of a raw weight, relative to the
/// desired term.
const INTERFERENCE_FLOOR: f64 = 1e-12;

/// Raw SIR weights per sensing pair (order of [`sensing_pairs`]):
/// `w̄_{s,r} = β̄_sr |v_sr^H a_sr|² / Σ_{t≠s} β̄_tr |v_sr^H a_tr|²`.
/// `None` when there are no interfering SSAs.
pub fn raw_weights(scenario: &Scenario, plan: &AssignmentPlan, combiners: &CombinerSet) -> Option<Vec<f64>> {
    if plan.num_ssas < 2 {
        return None;
    }
    let pairs = sensing_pairs(plan);
    Some(
        pairs
            .iter()
            .map(|&(s, r)| {
                let v = combiners.get(s, r).expect("combiner exists for every RX-AP of an SSA");
                let gain = |t: usize| scenario.ssa_link(t, r).beta * v.dotc(&scenario.ssa_steering(t, r)).norm_sqr();
                let desired = gain(s);
                let interference: f64 = (0..plan.num_ssas).filter(|&t| t != s).map(gain).sum();
                desired / interference.max(INTERFERENCE_FLOOR * desired)
            })
            .collect(),
    )
}

/// `w_{s,r} = w̄^v / Σ_{r'∈R_s} w̄^v` per SSA; uniform when `raw` is `None`.
pub fn normalize_weights(pairs: &[(usize, usize)], raw: Option<&[f64]>, v_exponent: f64) -> Vec<f64> {
    let mut out = vec![0.0; pairs.len()];
    let num_ssas = pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    for s in 0..num_ssas {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].0 == s).collect();
        if idx.is_empty() {
            continue;
        }
        let powered: Vec<f64> = match raw {
            Some(raw) => {
                // scale by the largest raw weight first so w̄^v cannot overflow
                let top = idx.iter().map(|&i| raw[i]).fold(0.0, f64::max);
                idx.iter().map(|&i| if v_exponent == 0.0 { 1.0 } else { (raw[i] / top).powf(v_exponent) }).collect()
            }
            None => vec![1.0; idx.len()],
        };
        let total: f64 = powered.iter().sum();
        for (&i, p) in idx.iter().zip(&powered) {
            out[i] = p / total;
        }
        // if rounding leaves the sequential sum off one, the last weight takes the remainder
        let last = idx[idx.len() - 1];
        let head: f64 = idx[..idx.len() - 1].iter().map(|&i| out[i]).sum();
        if head + out[last] != 1.0 {
            out[last] = 1.0 - head;
        }
    }
    out
}

pub fn compute_weights(scenario: &Scenario, plan: &AssignmentPlan, combiners: &CombinerSet, v_exponent: f64) -> Vec<f64> {
    let raw = raw_weights(scenario, plan, combiners);
    normalize_weights(&sensing_pairs(plan), raw.as_deref(), v_exponent)
}

/// `T_s = Σ_{r∈R_s} w_{s,r} T_{s,r}`. Pairs absent from `local` (NaN) are
/// skipped, which lets callers evaluate a single SSA.
pub fn aggregate(pairs: &[(usize, usize)], local: &[f64], weights: &[f64], num_ssas: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_ssas];
    for (i, &(s, _)) in pairs.iter().enumerate() {
        if !local[i].is_nan() {
            out[s] += weights[i] * local[i];
        }
    }
    out
}
