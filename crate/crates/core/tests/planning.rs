use nvsim_core::planning::*;
use nvsim_core::simulator::*;
use nvsim_core::statmodels::{BimodalChargeModel, SkewNormalParams};
use proptest::prelude::*;

#[test]
fn correlated_presets() {
    let serial = Modality::SccSerial.preset(100e-6);
    let par = Modality::SccParallel.preset(100e-6);
    let ts = time_to_unit_snr_correlated(&serial, 100, CorrelatedMode::Serial).unwrap();
    let tp = time_to_unit_snr_correlated(&par, 100, CorrelatedMode::Parallel).unwrap();
    assert!((ts - 6462.7).abs() < 0.5, "{ts}");
    assert!((tp - 16.44).abs() < 0.01, "{tp}");
    let pair = time_to_unit_snr_correlated(&serial, 2, CorrelatedMode::Serial).unwrap();
    assert!((pair - 256.0 * 5.1e-3).abs() < 1e-9);
    assert!(time_to_unit_snr_correlated(&serial, 1, CorrelatedMode::Serial).is_err());
}

#[test]
fn zero_snr_is_rejected() {
    let mut p = Modality::SccParallel.preset(1e-4);
    p.single_shot_snr = 0.0;
    assert!(time_to_unit_snr_independent(&p, 3).is_err());
    assert!(time_to_unit_snr_independent(&Modality::SccParallel.preset(1e-4), 0).is_err());
}

#[test]
fn crossover_within_ten() {
    let n = crossover_n(&Modality::SccParallel.preset(100e-6), &Modality::ConventionalSerial.preset(100e-6), 1000)
        .unwrap()
        .unwrap();
    assert_eq!(n, 9);
}

#[test]
fn scalability_bounds() {
    let omega = |lifetime: f64| 1.0 / (3.0 * lifetime);
    assert_eq!(max_n_relaxation(omega(5e-3), 10e-6, 1.0), 500);
    assert_eq!(max_n_relaxation(omega(3e-3), 10e-6, 1.0), 300);
    assert_eq!(max_n_relaxation(omega(1e-3), 10e-6, 1.0), 100);
    assert_eq!(max_n_relaxation(omega(5e-3), 10e-6, 0.5), 1000);
    assert_eq!(max_n_bandwidth(0.59, 2.76, 45.0, 1.0), 9101);
    assert_eq!(max_n_bandwidth(0.16, 2.76, 45.0, 1.0), 2468);
    assert_eq!(max_n_bandwidth(0.59, 2.76, 45.0, 1e-9), 0);
    assert_eq!(max_n_bandwidth_aods(0.59, &[AodChannel::GREEN, AodChannel::RED], 1.0), Some(9101));
}

#[test]
fn beam_optimum() {
    let [(_, bulk), (_, shallow), (_, nano)] = ScalabilityParams::contexts(0.59);
    let b = optimal_beam_fraction(&bulk).unwrap();
    assert!((b.beam_fraction - 0.3801).abs() < 1e-3 && (b.n_max - 1315.4).abs() < 0.5, "{b:?}");
    assert!((optimal_beam_fraction(&shallow).unwrap().n_max - 935.4).abs() < 0.5);
    assert!((optimal_beam_fraction(&nano).unwrap().n_max - 449.8).abs() < 0.5);
    let cold = ScalabilityParams { sq_relaxation_rate_hz: 0.0, ..bulk };
    let c = optimal_beam_fraction(&cold).unwrap();
    assert_eq!(c.beam_fraction, 1.0);
    assert_eq!(c.n_max_floor, 9101);
    // curves meet at full aperture
    let nb = n_bandwidth_curve(0.59, 2.76, 45.0, 1.0);
    let tuned = ScalabilityParams { sq_relaxation_rate_hz: 1.0 / (3.0 * 10e-6 * nb), ..bulk };
    assert!((optimal_beam_fraction(&tuned).unwrap().beam_fraction - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn time_is_monotone(
        k in 0.01f64..1.0, tos in 0.0f64..1e-2, tis in 0.0f64..1e-2, top in 0.0f64..0.1, tip in 0.0f64..1e-2,
        n in 1u64..1000, bump in 1e-6f64..1e-3,
    ) {
        let p = ModalityParams {
            single_shot_snr: k, t_overhead_serial_s: tos, t_interrogate_serial_s: tis,
            t_overhead_parallel_s: top, t_interrogate_parallel_s: tip,
            prefactor_independent: 1.0, prefactor_correlated: 1.0,
        };
        let t = time_to_unit_snr_independent(&p, n).unwrap();
        // rebuilt from base units
        let manual = (n as f64 * (tos + tis) + top + tip) / (k * k);
        prop_assert!((t - manual).abs() <= 1e-12 * manual.max(1e-300));
        if tos + tis > 0.0 {
            prop_assert!(time_to_unit_snr_independent(&p, n + 1).unwrap() > t);
        }
        for f in [
            |p: &mut ModalityParams, b| p.t_overhead_serial_s += b,
            |p: &mut ModalityParams, b| p.t_interrogate_serial_s += b,
            |p: &mut ModalityParams, b| p.t_overhead_parallel_s += b,
            |p: &mut ModalityParams, b| p.t_interrogate_parallel_s += b,
        ] {
            let mut q = p;
            f(&mut q, bump);
            prop_assert!(time_to_unit_snr_independent(&q, n).unwrap() > t);
        }
        let mut q = p;
        q.single_shot_snr = (k * 1.01).min(1.0);
        if q.single_shot_snr > k {
            prop_assert!(time_to_unit_snr_independent(&q, n).unwrap() < t);
        }
    }

    #[test]
    fn beam_optimum_satisfies_both_bounds(lifetime in 1e-4f64..1e-1, d in 0.01f64..2.0) {
        let p = ScalabilityParams::room_temperature(lifetime, d);
        let o = optimal_beam_fraction(&p).unwrap();
        let nr = n_relaxation_curve(p.sq_relaxation_rate_hz, p.aod_access_time_s, o.beam_fraction);
        let nb = n_bandwidth_curve(d, p.dispersion_um_per_mhz, p.rf_bandwidth_mhz, o.beam_fraction);
        if o.beam_fraction < 1.0 {
            prop_assert!((nr - o.n_max).abs() < 1.0 && (nb - o.n_max).abs() < 1.0);
        } else {
            prop_assert!((nr.min(nb) - o.n_max).abs() < 1.0);
        }
    }

    #[test]
    fn serial_over_parallel_grows(n in 10u64..2000) {
        let s = Modality::SccSerial.preset(1e-4);
        let p = Modality::SccParallel.preset(1e-4);
        let r = |n| time_to_unit_snr_correlated(&s, n, CorrelatedMode::Serial).unwrap()
            / time_to_unit_snr_correlated(&p, n, CorrelatedMode::Parallel).unwrap();
        prop_assert!(r(n + 1) > r(n));
    }
}

/// Spin contrast of the last NV in a serial SCC chain of `n`, with
/// perfect readout so a bit equals `m_s = 0`.
fn last_nv_contrast(n: usize, omega: f64, tau: f64, shots: u64) -> (f64, f64) {
    let model = BimodalChargeModel {
        p_nv0: 0.5,
        mode_nv0: SkewNormalParams { location: 10.0, scale: 3.0, shape: 0.0 },
        mode_nvm: SkewNormalParams { location: 200.0, scale: 3.0, shape: 0.0 },
    };
    let nvs: Vec<NvCenter> = (0..n)
        .map(|id| NvCenter {
            id,
            position_um: [id as f64, 0.0],
            orientation: Orientation::A,
            resonance_low_hz: 2.813e9,
            resonance_high_hz: 2.928e9,
            scc_fidelity_given_ms0: 1.0,
            scc_fidelity_given_ms1: 1.0,
            c13_osc_freqs: vec![],
            brightness_model: model,
        })
        .collect();
    let all: Vec<usize> = (0..n).collect();
    let mut p = [0.0; 2];
    for (k, flip) in [false, true].into_iter().enumerate() {
        let mut steps = vec![
            Step::ChargePolarizeSerial { targets: all.clone(), success_prob: 1.0 },
            Step::SpinPolarizeGlobal { fidelity: 1.0 },
        ];
        if flip {
            steps.push(Step::MicrowavePulse {
                orientations: vec![Orientation::A],
                angle_rad: std::f64::consts::PI,
                random: false,
                frequency_hz: None,
            });
        }
        steps.push(Step::SccSerial {
            ordering: all.clone(),
            inserted_pi_pulses: vec![],
            crosstalk: None,
            relaxation: Some(SpinRelaxation { sq_relaxation_rate_hz: omega, step_time_s: tau }),
        });
        steps.push(Step::Readout { exposure_ms: 50.0, survival_nvm: 1.0 });
        let seq = SequenceConfig { microwave: MicrowaveSettings { rabi_hz: 8e6, pulse_fidelity: 1.0 }, steps };
        let eng = ShotEngine::new(&nvs, &seq, 40 + k as u64).unwrap();
        let hits = (0..shots).filter(|&s| eng.run_shot(s).nvs[n - 1].charge_bit).count();
        p[k] = hits as f64 / shots as f64;
    }
    let se = ((p[0] * (1.0 - p[0]) + p[1] * (1.0 - p[1])) / shots as f64).sqrt();
    (p[0] - p[1], se)
}

#[test]
fn relaxation_bound_matches_simulated_contrast() {
    let omega = 1.0 / (3.0 * 5e-3);
    let tau = 10e-6;
    let n = max_n_relaxation(omega, tau, 1.0) as usize;
    let e = (-1.0f64).exp();
    let (c1, _) = last_nv_contrast(1, omega, tau, 200);
    assert_eq!(c1, 1.0);
    let (c, se) = last_nv_contrast(n, omega, tau, 4000);
    assert!(c >= e - 3.0 * se, "n = {n}: contrast {c} (se {se})");
    let want = (-3.0 * omega * tau * (n - 1) as f64).exp();
    assert!((c - want).abs() < 4.0 * se, "{c} vs {want}");
    let (c2, se2) = last_nv_contrast(2 * n, omega, tau, 4000);
    assert!(c2 + 3.0 * se2 < e, "2n: contrast {c2}");
}
