use std::path::Path;
use std::process::{Command, Output};

fn nvsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvsim")).args(args).env_remove("NVSIM_THREADS").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_config_key_is_a_line_anchored_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "schema_version = 1\nseed = 4\n\n[output]\nrecord = \"csv\"\n").unwrap();
    let out = nvsim(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("record"), "{err}");
}

#[test]
fn bad_flags_and_scenarios_are_config_errors() {
    assert_eq!(nvsim(&["simulate", "--shots", "many"]).status.code(), Some(1));
    assert_eq!(nvsim(&["simulate", "--scenario", "fig9"]).status.code(), Some(1));
    assert_eq!(nvsim(&["simulate", "--threads", "0", "--scenario", "fig4-block"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_a_runtime_error_naming_the_path() {
    let out = nvsim(&["analyze", "--input", "/nonexistent/shots.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/shots.bin"));
}

#[test]
fn env_threads_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let base = ["simulate", "--scenario", "fig4-reference", "--shots", "5000", "--seed", "3", "--out"];
    let run = |out: &Path, env: &str| {
        let mut args = base.to_vec();
        args.push(out.to_str().unwrap());
        Command::new(env!("CARGO_BIN_EXE_nvsim")).args(&args).env("NVSIM_THREADS", env).output().unwrap()
    };
    assert!(run(&a, "1").status.success());
    assert!(run(&b, "3").status.success());
    for f in ["shots.bin", "summary.json", "config.json", "corr_bits.tsv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(run(&a, "zero").status.code(), Some(1));
}

#[test]
fn simulate_then_analyze_checkerboard() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = nvsim(&[
        "simulate", "--scenario", "fig4-checkerboard", "--shots", "100000", "--seed", "12", "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&sim.join("summary.json"));
    assert_eq!(summary["seed"], 12);
    assert_eq!(summary["results"]["sign_pattern"]["matching_pairs"], 45);
    let hash = summary["config_hash"].as_str().unwrap();
    assert_eq!(json(&sim.join("config.json"))["config_hash"].as_str().unwrap(), hash);
    for nv in summary["results"]["per_nv"].as_array().unwrap() {
        let f = nv["nvm_fraction"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f));
    }

    let out = nvsim(&["analyze", "--input", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&sim.join("analysis").join("analysis.json"));
    assert_eq!(report["shots.bin"]["recorded_bits"]["sign_pattern"]["matching_pairs"], 45);
    assert!(sim.join("analysis").join("thresholds.tsv").is_file());
}

#[test]
fn conditional_init_scenario_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("fig2");
    let out = nvsim(&["simulate", "--scenario", "fig2-conditional-init", "--shots", "20000", "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&sim.join("summary.json"));
    let at3 = s["results"]["simulated_at_attempt"].as_f64().unwrap();
    assert!((at3 - 9.0).abs() < 0.1, "{at3}");

    let out = nvsim(&["analyze", "--input", sim.join("trajectory.tsv").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&sim.join("analysis").join("analysis.json"));
    let c1 = r["trajectory.tsv"]["c1"].as_f64().unwrap();
    let c2 = r["trajectory.tsv"]["c2"].as_f64().unwrap();
    assert!((c1 - 0.225).abs() < 0.015 && (c2 - 0.705).abs() < 0.013, "{c1} {c2}");
}

#[test]
fn fit_histogram_file() {
    use nvsim_core::statmodels::CountHistogram;
    let model = nvsim_core::simulator::preset_nvs()[0].brightness_model;
    let mut rng = nvsim_core::rng::stream_rng(1, nvsim_core::rng::tag(b"hist"), 0);
    let samples: Vec<f64> = (0..40_000).map(|_| model.sample(&mut rng).1).collect();
    let h = CountHistogram::from_samples(&samples, 80).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("hist.txt");
    std::fs::write(&p, nvsim::formats::encode_histogram(&h)).unwrap();
    let out = nvsim(&["fit", "--input", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("fit.json"));
    let t = v["threshold"].as_f64().unwrap();
    assert!(t > model.mode_nv0.location && t < model.mode_nvm.location, "{t}");
    assert!((v["p_nv0"].as_f64().unwrap() - 0.3).abs() < 0.03);
}

#[test]
fn plan_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvsim(&["plan", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("plan.json"));
    assert!(v["crossover_n"].as_u64().unwrap() <= 10);
    assert_eq!(v["cryogenic_bandwidth_limit"], 9101);
    let bulk = &v["scalability"][0];
    assert!((bulk["optimal_beam_fraction"].as_f64().unwrap() - 0.380).abs() < 0.001);
    assert!((bulk["optimal_n"].as_f64().unwrap() - 1315.0).abs() < 1.0);
    assert_eq!(bulk["within_25_percent"], true);
    for f in ["independent.tsv", "correlated.tsv", "scalability_bulk.tsv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn reproduce_runs_selected_criteria() {
    let out = nvsim(&["reproduce", "--only", "4", "--only", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2, "{text}");
}
