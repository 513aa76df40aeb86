use super::*;
use crate::assignment::assign;
use crate::beamforming::{build_precoders, estimate_norm_scale, mrc_combiners, Normalization};
use crate::channel::{build_two_way_channels, draw_comm_channels, estimate_channels, ChannelStatistics};
use crate::config::SystemConfig;

fn system_for(cfg: &SystemConfig, v_exponent: f64) -> (Scenario, SensingSystem) {
    let sc = Scenario::build(cfg, 21).unwrap();
    let plan = assign(&sc).unwrap();
    let stats = ChannelStatistics::new(&sc).unwrap();
    let mut rng = stream(1, Purpose::Normalization, 0);
    let scale = estimate_norm_scale(&stats, &plan, cfg.p_ul, cfg.sigma_n2, 20, &mut rng);
    let mut rng = stream(1, Purpose::Channels, 0);
    let ch = draw_comm_channels(&stats, &mut rng);
    let est = estimate_channels(&ch, &stats, &mut rng);
    let pre = build_precoders(&sc, &plan, &est, &scale, Normalization::Ensemble);
    let comb = mrc_combiners(&sc, &plan);
    let power = PowerVector::equal_split(&plan, cfg.p_tx);
    let sys = SensingSystem::new(&sc, &plan, build_two_way_channels(&sc), pre, comb, power, v_exponent).unwrap();
    (sc, sys)
}

fn small(num_ssas: usize, rx: usize) -> SystemConfig {
    SystemConfig { num_aps: 16, num_ues: 3, num_ssas, rx_per_ssa: rx, tau_s: 6, ..Default::default() }
}

fn frame_and_rcs(sys: &SensingSystem, seed: u64) -> (TransmitFrame, RcsRealization) {
    let plan = &sys.plan;
    let sym = draw_symbols(plan.num_ues, plan.num_ssas, sys.tau_s, &mut stream(seed, Purpose::Symbols, 0));
    let rcs = draw_rcs(plan.num_ssas, plan.rx_aps.len(), plan.num_tx(), None, &mut stream(seed, Purpose::Rcs, 0));
    (assemble_transmit(plan, &sys.precoders, &sys.power, &sym, sys.antennas).unwrap(), rcs)
}

#[test]
fn noiseless_reception_is_the_literal_sum() {
    let (_, mut sys) = system_for(&small(2, 2), 0.25);
    sys.sigma_n2 = 0.0;
    let (frame, rcs) = frame_and_rcs(&sys, 3);
    let mut rng = stream(4, Purpose::Noise, 0);
    let none = simulate_reception(&sys, &frame, &rcs, &[false, false], None, &mut rng);
    assert!(none.y.iter().all(|v| *v == Complex64::default()));

    let hyp = [true, true];
    let block = simulate_reception(&sys, &frame, &rcs, &hyp, None, &mut rng);
    for (p, &(s, r)) in sys.pairs.iter().enumerate() {
        let v = sys.combiners.get(s, r).unwrap();
        let ri = sys.plan.rx_index(r).unwrap();
        for m in 0..sys.tau_s {
            let mut expect = Complex64::default();
            for t in 0..2 {
                for (li, &l) in sys.plan.tx_aps.iter().enumerate() {
                    let g = sys.two_way.matrix(t, r, l);
                    expect += v.dotc(&(g * frame.get(li, m))) * rcs.get(t, ri, li);
                }
            }
            assert!((block.pair(p)[m] - expect).norm() <= 1e-12 * expect.norm());
        }
        // regressors agree with the full-matrix product
        let b = fis_regressors(&sys, p, &frame);
        for m in 0..sys.tau_s {
            for (li, &l) in sys.plan.tx_aps.iter().enumerate() {
                let full = v.dotc(&(sys.two_way.matrix(s, r, l) * frame.get(li, m)));
                assert!((b[m][li] - full).norm() <= 1e-12 * full.norm().max(1e-300));
            }
        }
    }
}

#[test]
fn single_target_has_no_interference_term() {
    let (_, mut sys) = system_for(&small(1, 1), 0.25);
    sys.sigma_n2 = 0.0;
    let (frame, rcs) = frame_and_rcs(&sys, 5);
    let block = simulate_reception(&sys, &frame, &rcs, &[true], None, &mut stream(1, Purpose::Noise, 0));
    let b = fis_regressors(&sys, 0, &frame);
    for m in 0..sys.tau_s {
        let g: Complex64 = (0..sys.plan.num_tx()).map(|li| b[m][li] * rcs.get(0, 0, li)).sum();
        assert!((block.pair(0)[m] - g).norm() <= 1e-12 * g.norm());
    }
}

#[test]
fn combined_noise_keeps_its_variance() {
    let (_, sys) = system_for(&small(1, 1), 0.25);
    let (frame, rcs) = frame_and_rcs(&sys, 5);
    let mut rng = stream(9, Purpose::Noise, 0);
    let mut acc = 0.0;
    let mut n = 0;
    while n < 100_000 {
        let block = simulate_reception(&sys, &frame, &rcs, &[false], None, &mut rng);
        acc += block.y.iter().map(|v| v.norm_sqr()).sum::<f64>();
        n += block.y.len();
    }
    let var = acc / n as f64;
    assert!((var / sys.sigma_n2 - 1.0).abs() < 0.02, "{}", var / sys.sigma_n2);
}

#[test]
fn weights_are_normalised_per_ssa() {
    for (rx, v) in [(1, 0.25), (2, 0.0), (2, 0.25), (3, 1.0)] {
        let (_, sys) = system_for(&small(3, rx), v);
        for s in 0..3 {
            let w: Vec<f64> = sys.pairs.iter().zip(&sys.weights).filter(|(p, _)| p.0 == s).map(|(_, w)| *w).collect();
            assert_eq!(w.len(), rx);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(w.iter().all(|&x| x > 0.0));
            if rx == 1 {
                assert_eq!(w, vec![1.0]);
            }
            if v == 0.0 {
                assert!(w.iter().all(|&x| x == 1.0 / rx as f64));
            }
        }
    }
    let (_, sys) = system_for(&small(1, 2), 0.25);
    assert_eq!(sys.weights, vec![0.5, 0.5]);
}

#[test]
fn threshold_quantile_extremes() {
    let samples: Vec<f64> = (1..=9).map(f64::from).rev().collect();
    assert_eq!(empirical_threshold(&samples, 1.0), 1.0);
    assert_eq!(empirical_threshold(&samples, 0.5), 5.0);
    assert_eq!(empirical_threshold(&samples, 1e-9), 9.0);
    assert_eq!(empirical_threshold(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.0);
}

#[test]
fn detection_exceeds_false_alarm_and_is_thread_independent() {
    let (_, sys) = system_for(&small(2, 1), 0.25);
    let cfg = DetectorConfig { n_calib: 2000, n_trials: 500, ..Default::default() };
    let cal = calibrate_threshold(&sys, &cfg, 7).unwrap();
    let rep = detection_probability(&sys, &cfg, &cal, 8).unwrap();
    for s in 0..2 {
        assert!(rep.p_d[s] >= cal.in_sample_pfa[s]);
        assert!((0.0..=1.0).contains(&rep.p_d[s]));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let cal1 = pool.install(|| calibrate_threshold(&sys, &cfg, 7).unwrap());
    assert_eq!(cal1.thresholds, cal.thresholds);
}

#[test]
fn huge_rcs_is_always_detected() {
    let cfg = SystemConfig { sigma_rcs2: 1e6, ..small(1, 1) };
    let (_, sys) = system_for(&cfg, 0.25);
    let det = DetectorConfig { n_calib: 1000, n_trials: 300, ..Default::default() };
    let cal = calibrate_threshold(&sys, &det, 1).unwrap();
    let rep = detection_probability(&sys, &det, &cal, 2).unwrap();
    assert!(rep.min_p_d > 0.99, "{:?}", rep.p_d);
}

#[test]
fn pis_mode_runs_and_reports() {
    let (_, sys) = system_for(&small(2, 1), 0.25);
    let det = DetectorConfig { mode: DetectorMode::Pis, n_calib: 1000, n_trials: 200, ..Default::default() };
    let cal = calibrate_threshold(&sys, &det, 1).unwrap();
    let rep = detection_probability(&sys, &det, &cal, 2).unwrap();
    assert!(rep.p_d.iter().all(|p| (0.0..=1.0).contains(p)));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    write_trial_csv(&path, &cal, &rep).unwrap();
    let rows = std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 1000 + 2 * 200);
}

#[test]
fn fis_statistic_grows_with_signal_strength() {
    let (_, sys) = system_for(&small(1, 1), 0.25);
    let cfg = DetectorConfig::default();
    let median = |scale: f64| {
        let mut t: Vec<f64> = (0..400)
            .map(|i| {
                let seed = derive_seed(3, Purpose::Validation, i);
                let (frame, mut rcs) = frame_and_rcs(&sys, seed);
                rcs.alpha.iter_mut().for_each(|a| *a *= scale);
                let block = simulate_reception(&sys, &frame, &rcs, &[true], None, &mut stream(seed, Purpose::Noise, 0));
                local_statistics(&sys, &frame, &block, &cfg, None).unwrap().0[0]
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t[200]
    };
    assert!(median(2.0) >= median(1.0));
}
