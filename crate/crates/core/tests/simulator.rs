use std::f64::consts::PI;

use nvsim_core::analysis::{coeffs_from_rates, correlation_from_bits};
use nvsim_core::error::Error;
use nvsim_core::simulator::*;
use nvsim_core::statmodels::{BimodalChargeModel, SkewNormalParams};
use proptest::prelude::*;

fn sharp_model() -> BimodalChargeModel {
    BimodalChargeModel {
        p_nv0: 0.5,
        mode_nv0: SkewNormalParams { location: 10.0, scale: 3.0, shape: 0.0 },
        mode_nvm: SkewNormalParams { location: 200.0, scale: 3.0, shape: 0.0 },
    }
}

fn ideal_nv(id: usize, x: f64) -> NvCenter {
    NvCenter {
        id,
        position_um: [x, 0.0],
        orientation: Orientation::A,
        resonance_low_hz: 2.813e9,
        resonance_high_hz: 2.928e9,
        scc_fidelity_given_ms0: 1.0,
        scc_fidelity_given_ms1: 1.0,
        c13_osc_freqs: vec![],
        brightness_model: sharp_model(),
    }
}

fn spin_sequence(n: usize, flip: bool) -> SequenceConfig {
    let all: Vec<usize> = (0..n).collect();
    let mut steps = vec![
        Step::ChargePolarizeSerial { targets: all.clone(), success_prob: 1.0 },
        Step::SpinPolarizeGlobal { fidelity: 1.0 },
    ];
    if flip {
        steps.push(Step::MicrowavePulse { orientations: vec![Orientation::A], angle_rad: PI, random: false, frequency_hz: None });
    }
    steps.push(Step::SccSerial { ordering: all, inserted_pi_pulses: vec![], crosstalk: None, relaxation: None });
    steps.push(Step::Readout { exposure_ms: 50.0, survival_nvm: 1.0 });
    SequenceConfig { microwave: MicrowaveSettings { rabi_hz: 8e6, pulse_fidelity: 1.0 }, steps }
}

#[test]
fn ideal_readout_maps_spin_to_bit() {
    let nvs: Vec<_> = (0..4).map(|i| ideal_nv(i, 5.0 * i as f64)).collect();
    for (flip, want) in [(false, true), (true, false)] {
        let shots = run_shots(&nvs, &spin_sequence(4, flip), 200, 3).unwrap();
        for s in &shots {
            for o in &s.nvs {
                assert_eq!(o.charge_bit, want);
                assert_eq!(o.spin_prep, Some(if flip { SpinState::Ms1 } else { SpinState::Ms0 }));
            }
        }
    }
}

#[test]
fn batching_does_not_change_shots() {
    let nvs = preset_nvs();
    let targets: Vec<usize> = (0..10).collect();
    let seq = correlation_sequence(CorrelationPattern::Block, &nvs, &targets, &CorrelationSettings::default()).unwrap();
    let eng = ShotEngine::new(&nvs, &seq, 99).unwrap();
    let whole = eng.run_range(0..300);
    let mut parts = eng.run_range(0..117);
    parts.extend(eng.run_range(117..300));
    assert_eq!(whole, parts);
    assert!(whole.iter().all(|s| s.sequence_hash == seq.fingerprint() && s.random_pi.is_some()));
    let other = ShotEngine::new(&nvs, &seq, 100).unwrap().run_range(0..300);
    assert_ne!(whole, other);
}

#[test]
fn invalid_sequences_are_config_errors() {
    let nvs = preset_nvs();
    let mut seq = spin_sequence(3, false);
    // NV 10 has orientation C
    seq.steps[0] = Step::ChargePolarizeSerial { targets: vec![0, 10], success_prob: 0.8 };
    assert!(matches!(ShotEngine::new(&nvs, &seq, 1), Err(Error::Config(_))));

    let mut seq = spin_sequence(3, false);
    seq.steps.push(Step::Readout { exposure_ms: 50.0, survival_nvm: 1.0 });
    assert!(matches!(ShotEngine::new(&nvs, &seq, 1), Err(Error::Config(_))));

    let mut seq = spin_sequence(3, false);
    seq.steps[2] = Step::SccSerial { ordering: vec![0, 1, 1], inserted_pi_pulses: vec![], crosstalk: None, relaxation: None };
    assert!(matches!(ShotEngine::new(&nvs, &seq, 1), Err(Error::Config(_))));

    let seq = spin_sequence(20, false);
    assert!(matches!(ShotEngine::new(&nvs, &seq, 1), Err(Error::Config(_))));
}

#[test]
fn survival_mapping_rejects_impossible_rates() {
    let r = RatesConfig { fidelity_nvm: 0.6, fidelity_nv0: 0.5, survival_nvm: 0.5, init_success: 0.5 };
    assert!(r.physical_survival().is_err());
    let r = RatesConfig { fidelity_nvm: 0.5, fidelity_nv0: 0.5, survival_nvm: 0.9, init_success: 0.5 };
    assert!(matches!(r.validate(), Err(Error::DegenerateReadout(_))));
}

#[test]
fn conditional_init_matches_closed_form_for_fig2_rates() {
    let rates = RatesConfig { fidelity_nvm: 0.95, fidelity_nv0: 0.934, survival_nvm: 0.9756, init_success: 0.7919 };
    let model = coeffs_from_rates(&rates).unwrap();
    let traj = run_conditional_init(10, 10, &rates, 20_000, 5).unwrap();
    let n0 = traj.mean[0];
    assert!((n0 - 0.66).abs() < 4.0 * traj.std_error[0]);
    for i in 1..=10 {
        // predicted from the exact start 0.66
        let want = model.predict(10, 0.66, i as u32).unwrap();
        let z = (traj.mean[i] - want) / traj.std_error[i];
        // family-wise 1e-4 over 10 attempts
        assert!(z.abs() < 4.6, "attempt {i}: {} vs {want} (z = {z})", traj.mean[i]);
    }
    let unc = unconditional_init_mean(10, &rates, 20_000, 6).unwrap();
    assert!((unc.mean - 7.66).abs() < 0.05, "{unc:?}");
}

#[test]
fn conditional_stats_merge_in_any_split() {
    let rates = RatesConfig { fidelity_nvm: 0.9, fidelity_nv0: 0.9, survival_nvm: 0.95, init_success: 0.7 };
    let whole = run_conditional_init_trials(8, 5, &rates, 0..500, 11).unwrap();
    let mut a = run_conditional_init_trials(8, 5, &rates, 0..200, 11).unwrap();
    a.merge(&run_conditional_init_trials(8, 5, &rates, 200..500, 11).unwrap()).unwrap();
    assert_eq!(whole, a);
}

#[test]
fn snr_tuning_hits_target() {
    let nvs = preset_nvs();
    let settings = CorrelationSettings::default();
    let s1 = tune_scc_ms1_for_snr(&nvs[0], &settings, 0.25).unwrap();
    let mut nv = nvs[0].clone();
    nv.scc_fidelity_given_ms1 = s1;
    let (pa, pb) = spin_contrast_probabilities(&nv, &settings).unwrap();
    assert!((single_shot_snr(pa, pb) - 0.25).abs() < 1e-9);
    assert!(tune_scc_ms1_for_snr(&nvs[0], &settings, 5.0).is_err());
}

#[test]
fn block_pattern_signs_show_up() {
    let nvs = preset_nvs();
    let targets: Vec<usize> = (0..10).collect();
    let settings = CorrelationSettings::default();
    let shots = correlation_experiment(CorrelationPattern::Block, &nvs, &targets, &settings, 40_000, 21).unwrap();
    let m = correlation_from_bits(&shots, &targets).unwrap();
    let (mut same, mut diff) = (0.0, 0.0);
    for i in 0..10 {
        for j in i + 1..10 {
            let r = m.get(i, j) * ideal_pattern_sign(CorrelationPattern::Block, &nvs, &targets, i, j);
            if ideal_pattern_sign(CorrelationPattern::Block, &nvs, &targets, i, j) > 0.0 {
                same += r / 20.0;
            } else {
                diff += r / 25.0;
            }
        }
    }
    // signed mean over each group, each roughly 0.0035 / sqrt(pairs) noise
    assert!(same > 0.008 && diff > 0.008, "same {same} diff {diff}");
}

#[test]
fn nearby_scc_pulse_lowers_contrast() {
    // NV 0 is converted first; NV 1 sits at `d` and is converted second
    let contrast = |d: f64| -> f64 {
        let nvs = vec![ideal_nv(0, 0.0), ideal_nv(1, d)];
        let xt = SccCrosstalk { waist_um: 1.4, reset_prob: 0.5 };
        let mut p = [0.0; 2];
        for (k, flip) in [false, true].into_iter().enumerate() {
            let mut seq = spin_sequence(2, flip);
            if let Step::SccSerial { crosstalk, .. } = &mut seq.steps[3 - (!flip) as usize] {
                *crosstalk = Some(xt);
            } else {
                panic!("layout of the test sequence changed");
            }
            let shots = run_shots(&nvs, &seq, 4000, 8).unwrap();
            p[k] = shots.iter().filter(|s| s.nvs[1].charge_bit).count() as f64 / 4000.0;
        }
        p[0] - p[1]
    };
    let near = contrast(0.5);
    let far = contrast(5.0);
    assert!((far - 1.0).abs() < 1e-12);
    // reset probability 0.5 exp(-2 (0.5/1.4)^2) ~ 0.39
    assert!(near < 0.7 && near > 0.5, "{near}");
}

#[test]
fn microwave_crosstalk_on_other_orientation() {
    let mut nvs = vec![ideal_nv(0, 0.0), ideal_nv(1, 5.0)];
    nvs[1].orientation = Orientation::B;
    nvs[1].resonance_low_hz = 2.858e9;
    let mut seq = spin_sequence(2, true);
    seq.steps.insert(
        2,
        Step::MicrowavePulse { orientations: vec![Orientation::B], angle_rad: 0.0, random: false, frequency_hz: None },
    );
    let n = 40_000;
    let shots = run_shots(&nvs, &seq, n, 4).unwrap();
    let flipped = shots.iter().filter(|s| !s.nvs[1].charge_bit).count() as f64 / n as f64;
    let want = nvsim_core::physics::rabi_contrast_at(45e6, 8e6);
    let se = (want * (1.0 - want) / n as f64).sqrt();
    assert!((flipped - want).abs() < 4.0 * se, "{flipped} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn charge_polarization_rate(b in 0.05f64..0.95, seed in 0u64..1000) {
        let nvs: Vec<_> = (0..5).map(|i| ideal_nv(i, 4.0 * i as f64)).collect();
        let mut seq = spin_sequence(5, false);
        seq.steps[0] = Step::ChargePolarizeSerial { targets: (0..5).collect(), success_prob: b };
        let n = 2000u64;
        let shots = run_shots(&nvs, &seq, n, seed).unwrap();
        let hits = shots.iter().flat_map(|s| &s.nvs).filter(|o| o.true_charge == ChargeState::Nvm).count() as f64;
        let m = (5 * n) as f64;
        let se = (b * (1.0 - b) / m).sqrt();
        prop_assert!((hits / m - b).abs() < 5.0 * se);
    }
}
