use std::path::Path;

use nvsim::config::{Overrides, RecordFormat, Resolved, RunConfig, Scenario};
use nvsim::formats::{decode_pgm, decode_shots_binary, decode_shots_csv};
use nvsim::scenarios::{simulate, tuned_nvs};
use nvsim_core::analysis::{disk_sizes, estimate_baseline, integrate_counts};
use nvsim_core::simulator::{correlation_sequence, run_shots, CorrelationPattern};

fn resolved(scenario: Scenario, shots: u64, threads: usize) -> Resolved {
    let cfg = RunConfig { scenario: Some(scenario.name().into()), ..RunConfig::default() };
    Resolved::new(cfg, Overrides { seed: Some(99), shots: Some(shots), threads: Some(threads), ..Default::default() }).unwrap()
}

#[test]
fn binary_records_match_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let r = resolved(Scenario::Fig4Block, 3000, 3);
    simulate(&r, dir.path()).unwrap();
    let (h, records) = decode_shots_binary(&std::fs::read(dir.path().join("shots.bin")).unwrap(), Path::new("x")).unwrap();
    assert_eq!(h.seed, 99);
    assert_eq!(h.n_shots, 3000);
    let nvs = tuned_nvs(&r).unwrap();
    let seq = correlation_sequence(CorrelationPattern::Block, &nvs, &r.targets, &r.correlation).unwrap();
    assert_eq!(records, run_shots(&nvs, &seq, 3000, 99).unwrap());
}

#[test]
fn csv_records_match_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = resolved(Scenario::Fig4Orientation, 1500, 2);
    simulate(&r, &dir.path().join("bin")).unwrap();
    r.output.records = RecordFormat::Csv;
    simulate(&r, &dir.path().join("csv")).unwrap();
    let (_, a) = decode_shots_binary(&std::fs::read(dir.path().join("bin/shots.bin")).unwrap(), Path::new("a")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("csv/shots.csv")).unwrap();
    let (seed, b) = decode_shots_csv(&text, Path::new("b")).unwrap();
    assert_eq!(seed, 99);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.nvs, y.nvs);
        assert_eq!(x.random_pi, y.random_pi);
    }
}

#[test]
fn frames_integrate_back_to_recorded_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = resolved(Scenario::Fig4Reference, 1200, 2);
    r.output.frames = 3;
    r.camera.noiseless = true;
    // integer ADUs are off by at most one per disk pixel, so a high gain
    // keeps that bound small
    r.camera.adu_per_photon = 1000.0;
    simulate(&r, dir.path()).unwrap();
    let (_, records) = decode_shots_binary(&std::fs::read(dir.path().join("shots.bin")).unwrap(), Path::new("x")).unwrap();
    for k in 0..3 {
        let p = dir.path().join(format!("frames/frame_{k:06}.pgm"));
        let frame = decode_pgm(&std::fs::read(&p).unwrap(), &p).unwrap();
        let b = estimate_baseline(&frame, &r.camera).unwrap();
        let counts = integrate_counts(&frame, &r.nvs, &r.camera, b.baseline_adu).unwrap();
        let sizes = disk_sizes(&r.nvs, &r.camera);
        for ((c, o), n) in counts.iter().zip(&records[k].nvs).zip(sizes) {
            let want = o.counts.max(0.0);
            assert!((c - want).abs() <= n as f64 / r.camera.adu_per_photon, "frame {k}: {c} vs {want}");
        }
    }
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    for s in [Scenario::Fig2ConditionalInit, Scenario::Fig4Checkerboard] {
        let a = dir.path().join(format!("{}-1", s.name()));
        let b = dir.path().join(format!("{}-5", s.name()));
        simulate(&resolved(s, 10_000, 1), &a).unwrap();
        simulate(&resolved(s, 10_000, 5), &b).unwrap();
        for e in std::fs::read_dir(&a).unwrap() {
            let name = e.unwrap().file_name();
            assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn custom_scenario_needs_a_sequence() {
    let cfg = RunConfig { scenario: Some("custom".into()), ..RunConfig::default() };
    assert!(Resolved::new(cfg, Overrides::default()).is_err());
}

#[test]
fn custom_sequence_from_toml() {
    let text = r#"
schema_version = 1
scenario = "custom"
seed = 5
shots = 2000
targets = [0, 1]

[sequence]
steps = [
  { kind = "charge_polarize_serial", targets = [0, 1], success_prob = 1.0 },
  { kind = "spin_polarize_global", fidelity = 1.0 },
  { kind = "scc_serial", ordering = [0, 1], inserted_pi_pulses = [] },
  { kind = "readout", exposure_ms = 30.0, survival_nvm = 1.0 },
]
"#;
    let cfg = RunConfig::from_toml(text).unwrap();
    let r = Resolved::new(cfg, Overrides { threads: Some(2), ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = simulate(&r, dir.path()).unwrap();
    let per_nv = summary["results"]["per_nv"].as_array().unwrap();
    // NV 0 is charge-polarized and in m_s = 0: it mostly stays NV-
    assert!(per_nv[0]["nvm_fraction"].as_f64().unwrap() > 0.8);
    // NV 12 is never touched and stays NV0
    assert_eq!(per_nv[12]["nvm_fraction"].as_f64().unwrap(), 0.0);
}
