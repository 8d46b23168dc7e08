//! Built-in scenarios and the `simulate` driver.
//!
//! Every scenario writes `config.json` (resolved configuration and its hash)
//! and `summary.json` into the output directory, plus its own data files.
//! Nothing written depends on wall time or on the thread count.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use nvsim_core::analysis::{coeffs_from_rates, normalize_spin_signal, rates_from_coeffs, ConditionalInitModel};
use nvsim_core::analysis::{CorrelationAccumulator, CorrelationMatrix};
use nvsim_core::planning::{time_to_unit_snr_correlated, time_to_unit_snr_independent, CorrelatedMode, Modality};
use nvsim_core::rng::{derive_seed, stream_rng, tag, tags};
use nvsim_core::simulator::{
    correlation_sequence, ideal_pattern_sign, render_frame, run_conditional_init_trials, tune_scc_ms1_for_snr,
    unconditional_init_mean, BaselineWalk, ChargeState, ConditionalInitStats, CorrelationPattern, NvCenter,
    Orientation, RatesConfig, SequenceConfig, ShotEngine, Step,
};

use crate::config::{hex, RecordFormat, Resolved, Scenario};
use crate::formats::{self, ShotsHeader};
use crate::runner::{map_chunks, CHUNK};
use crate::{sig9, CliError};

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SHOTS_BIN: &str = "shots.bin";
pub const SHOTS_CSV: &str = "shots.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.tsv";

/// Runs the scenario of `r`, writes its files under `out` and returns the
/// summary document.
pub fn simulate(r: &Resolved, out: &Path) -> Result<Value, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let hash = r.hash();
    let config_doc = json!({ "config_hash": hash, "resolved": serde_json::to_value(r).expect("config serializes") });
    write_json(&out.join(CONFIG_FILE), &config_doc)?;
    let body = match r.scenario {
        Scenario::Fig2ConditionalInit => conditional_init(r, out)?,
        Scenario::Fig3Esr => esr_sweep(r, out)?,
        _ => shot_records(r, out, &hash)?,
    };
    let summary = json!({
        "scenario": r.scenario.name(),
        "seed": r.seed,
        "shots": r.shots,
        "config_hash": hash,
        "results": body,
        "planning": planning_estimates(r)?,
    });
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    formats::write_atomic(path, s.as_bytes())
}

fn num(x: f64) -> Value {
    // 9 significant digits in every structured output
    sig9(x).parse::<f64>().map(Value::from).unwrap_or(Value::Null)
}

/// Times to unit SNR for the number of targets in this run.
fn planning_estimates(r: &Resolved) -> Result<Value, CliError> {
    let n = (r.targets.len() as u64).max(2);
    let t_i = r.planning.t_interrogate_s;
    let mut independent = serde_json::Map::new();
    for m in Modality::ALL {
        independent.insert(m.name().into(), num(time_to_unit_snr_independent(&m.preset(t_i), n)?));
    }
    let conv = Modality::ConventionalSerial.preset(t_i);
    let scc = Modality::SccParallel.preset(t_i);
    Ok(json!({
        "n_nvs": n,
        "t_interrogate_s": num(t_i),
        "independent_s": independent,
        "correlated_s": {
            "conventional-serial": num(time_to_unit_snr_correlated(&conv, n, CorrelatedMode::Serial)?),
            "scc-parallel": num(time_to_unit_snr_correlated(&scc, n, CorrelatedMode::Parallel)?),
        },
    }))
}

/// Rates of the conditional-initialization scenario.
pub fn conditional_rates(r: &Resolved) -> Result<RatesConfig, CliError> {
    let c = &r.conditional;
    let rates = match r.rates {
        Some(rates) => rates,
        None => rates_from_coeffs(&ConditionalInitModel { c1: c.c1, c2: c.c2 }, c.fidelity_nvm, c.fidelity_nv0)?,
    };
    rates.validate()?;
    Ok(rates)
}

fn conditional_init(r: &Resolved, out: &Path) -> Result<Value, CliError> {
    let c = &r.conditional;
    if c.n_nvs == 0 || c.attempts == 0 || r.shots < 2 {
        return Err(CliError::Config("conditional init needs NVs, attempts and at least 2 trials".into()));
    }
    let rates = conditional_rates(r)?;
    let parts = map_chunks(r.shots, CHUNK, r.threads, |range| {
        run_conditional_init_trials(c.n_nvs, c.attempts, &rates, range, r.seed)
    })?;
    let mut stats = ConditionalInitStats::new(c.attempts);
    for p in &parts {
        stats.merge(p)?;
    }
    let traj = stats.finish();
    let model = coeffs_from_rates(&rates)?;
    let n0 = rates.false_nvm() * c.n_nvs as f64;
    let predicted = model.predict_trajectory(c.n_nvs, n0, c.attempts as u32)?;
    let rows: Vec<Vec<f64>> = (0..=c.attempts)
        .map(|i| vec![i as f64, traj.mean[i], traj.std_error[i], predicted[i]])
        .collect();
    let table = formats::encode_table(&["attempt", "mean_nvm", "std_error", "predicted"], &rows);
    formats::write_atomic(&out.join(TRAJECTORY_FILE), table.as_bytes())?;

    let uncond = unconditional_init_mean(c.n_nvs, &rates, r.shots, derive_seed(r.seed, tag(b"unconditional"), 0))?;
    let at3 = 3.min(c.attempts);
    Ok(json!({
        "n_nvs": c.n_nvs,
        "n_trials": traj.n_trials,
        "rates": {
            "fidelity_nvm": num(rates.fidelity_nvm),
            "fidelity_nv0": num(rates.fidelity_nv0),
            "survival_nvm": num(rates.survival_nvm),
            "init_success": num(rates.init_success),
        },
        "model": { "c1": num(model.c1), "c2": num(model.c2) },
        "steady_state": num(model.steady_state(c.n_nvs)?),
        "attempt": at3,
        "predicted_at_attempt": num(predicted[at3]),
        "simulated_at_attempt": num(traj.mean[at3]),
        "simulated_std_error": num(traj.std_error[at3]),
        "final_nvm_fraction": num(traj.mean[c.attempts] / c.n_nvs as f64),
        "unconditional_mean": num(uncond.mean),
        "unconditional_std_error": num(uncond.std_error),
    }))
}

/// NV list with each target's m_s=±1 SCC fidelity tuned to the configured
/// single-shot SNR.
pub fn tuned_nvs(r: &Resolved) -> Result<Vec<NvCenter>, CliError> {
    let mut nvs = r.nvs.clone();
    if let Some(k) = r.tune_snr {
        for &t in &r.targets {
            nvs[t].scc_fidelity_given_ms1 = tune_scc_ms1_for_snr(&nvs[t], &r.correlation, k)?;
        }
    }
    Ok(nvs)
}

fn target_orientations(nvs: &[NvCenter], targets: &[usize]) -> Vec<Orientation> {
    let mut o: Vec<Orientation> = targets.iter().map(|&t| nvs[t].orientation).collect();
    o.sort_by_key(|x| *x as u8);
    o.dedup();
    o
}

fn esr_sequence(r: &Resolved, nvs: &[NvCenter], pulse: Option<Option<f64>>) -> SequenceConfig {
    let s = &r.correlation;
    let mut steps = vec![
        Step::ChargePolarizeSerial { targets: r.targets.clone(), success_prob: s.charge_init_success },
        Step::SpinPolarizeGlobal { fidelity: s.spin_polarization },
    ];
    if let Some(frequency_hz) = pulse {
        steps.push(Step::MicrowavePulse {
            orientations: target_orientations(nvs, &r.targets),
            angle_rad: PI,
            random: false,
            frequency_hz,
        });
    }
    steps.push(Step::SccSerial {
        ordering: r.targets.clone(),
        inserted_pi_pulses: vec![],
        crosstalk: s.crosstalk,
        relaxation: None,
    });
    steps.push(Step::Readout { exposure_ms: s.exposure_ms, survival_nvm: s.survival_nvm });
    SequenceConfig { microwave: s.microwave, steps }
}

/// Fraction of shots with the charge bit set, per target.
fn bit_fractions(r: &Resolved, nvs: &[NvCenter], seq: &SequenceConfig, seed: u64) -> Result<Vec<f64>, CliError> {
    let engine = ShotEngine::new(nvs, seq, seed)?;
    let parts = map_chunks(r.shots, CHUNK, r.threads, |range| {
        let mut ones = vec![0u64; r.targets.len()];
        for shot in engine.run_range(range) {
            for (k, &t) in r.targets.iter().enumerate() {
                ones[k] += shot.nvs[t].charge_bit as u64;
            }
        }
        Ok::<_, CliError>(ones)
    })?;
    let mut total = vec![0u64; r.targets.len()];
    for p in parts {
        for (a, b) in total.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok(total.iter().map(|&k| k as f64 / r.shots as f64).collect())
}

/// Pulsed ESR: a π pulse at each swept frequency, normalized per NV by an
/// undriven and a resonantly driven reference.
fn esr_sweep(r: &Resolved, out: &Path) -> Result<Value, CliError> {
    let nvs = tuned_nvs(r)?;
    let e = &r.esr;
    let esr_tag = tag(b"esr");
    let ref0 = bit_fractions(r, &nvs, &esr_sequence(r, &nvs, None), derive_seed(r.seed, esr_tag, e.points as u64))?;
    let ref1 =
        bit_fractions(r, &nvs, &esr_sequence(r, &nvs, Some(None)), derive_seed(r.seed, esr_tag, e.points as u64 + 1))?;
    let mut raw_rows = Vec::with_capacity(e.points);
    let mut norm_rows = Vec::with_capacity(e.points);
    for p in 0..e.points {
        let f = e.start_hz + (e.stop_hz - e.start_hz) * p as f64 / (e.points - 1) as f64;
        let seq = esr_sequence(r, &nvs, Some(Some(f)));
        let sig = bit_fractions(r, &nvs, &seq, derive_seed(r.seed, esr_tag, p as u64))?;
        let norm = normalize_spin_signal(&sig, &ref0, &ref1)?;
        raw_rows.push(std::iter::once(f).chain(sig).collect::<Vec<f64>>());
        norm_rows.push(std::iter::once(f).chain(norm).collect::<Vec<f64>>());
    }
    let labels: Vec<String> = std::iter::once("freq_hz".to_string())
        .chain(r.targets.iter().map(|t| format!("nv{t}")))
        .collect();
    let header: Vec<&str> = labels.iter().map(String::as_str).collect();
    formats::write_atomic(&out.join("esr.tsv"), formats::encode_table(&header, &norm_rows).as_bytes())?;
    formats::write_atomic(&out.join("esr_raw.tsv"), formats::encode_table(&header, &raw_rows).as_bytes())?;

    let per_nv: Vec<Value> = r
        .targets
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let best = norm_rows.iter().max_by(|a, b| a[k + 1].total_cmp(&b[k + 1])).expect("at least two points");
            json!({
                "id": nvs[t].id,
                "resonance_low_hz": num(nvs[t].resonance_low_hz),
                "peak_freq_hz": num(best[0]),
                "peak_flipped_fraction": num(best[k + 1]),
                "ref_ms0_bit_fraction": num(ref0[k]),
                "ref_ms1_bit_fraction": num(ref1[k]),
            })
        })
        .collect();
    Ok(json!({ "points": e.points, "per_nv": per_nv }))
}

struct ChunkOut {
    bytes: Vec<u8>,
    bits: CorrelationAccumulator,
    counts: CorrelationAccumulator,
    nvm: Vec<u64>,
    ones: Vec<u64>,
}

fn matrix_value(m: &Result<CorrelationMatrix, nvsim_core::Error>) -> Value {
    match m {
        Ok(m) => {
            let off: Vec<f64> = (0..m.n_vars)
                .flat_map(|i| (i + 1..m.n_vars).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j))
                .collect();
            let mean = off.iter().sum::<f64>() / off.len().max(1) as f64;
            let spread = (off.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / off.len().max(1) as f64).sqrt();
            json!({
                "mean_off_diagonal": num(mean),
                "mean_abs_off_diagonal": num(off.iter().map(|x| x.abs()).sum::<f64>() / off.len().max(1) as f64),
                "max_abs_off_diagonal": num(off.iter().fold(0.0_f64, |a, x| a.max(x.abs()))),
                "off_diagonal_spread": num(spread),
                "std_error": num(m.std_error),
            })
        }
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Number of target pairs whose correlation sign matches the pattern.
pub fn sign_matches(pattern: CorrelationPattern, nvs: &[NvCenter], targets: &[usize], m: &CorrelationMatrix) -> (usize, usize) {
    let mut hit = 0;
    let mut total = 0;
    for i in 0..targets.len() {
        for j in i + 1..targets.len() {
            total += 1;
            if m.get(i, j) * ideal_pattern_sign(pattern, nvs, targets, i, j) > 0.0 {
                hit += 1;
            }
        }
    }
    (hit, total)
}

/// Shot-level scenarios: correlation patterns and custom sequences.
fn shot_records(r: &Resolved, out: &Path, hash: &str) -> Result<Value, CliError> {
    let nvs = tuned_nvs(r)?;
    let seq = match r.scenario.pattern() {
        Some(p) => correlation_sequence(p, &nvs, &r.targets, &r.correlation)?,
        None => r.sequence.clone().ok_or_else(|| CliError::Config("missing [sequence]".into()))?,
    };
    let engine = ShotEngine::new(&nvs, &seq, r.seed)?;
    let n = nvs.len();
    let nt = r.targets.len();
    let parts = map_chunks(r.shots, CHUNK, r.threads, |range| {
        let shots = engine.run_range(range);
        let mut c = ChunkOut {
            bytes: Vec::new(),
            bits: CorrelationAccumulator::new(nt),
            counts: CorrelationAccumulator::new(nt),
            nvm: vec![0; n],
            ones: vec![0; n],
        };
        match r.output.records {
            RecordFormat::Binary => formats::encode_shots_binary(&shots, &mut c.bytes),
            RecordFormat::Csv => formats::encode_shots_csv(&shots, &mut c.bytes),
            RecordFormat::None => {}
        }
        let mut xb = vec![0.0; nt];
        let mut xc = vec![0.0; nt];
        for s in &shots {
            for (i, o) in s.nvs.iter().enumerate() {
                c.nvm[i] += (o.true_charge == ChargeState::Nvm) as u64;
                c.ones[i] += o.charge_bit as u64;
            }
            for (k, &t) in r.targets.iter().enumerate() {
                xb[k] = s.nvs[t].charge_bit as u8 as f64;
                xc[k] = s.nvs[t].counts;
            }
            c.bits.push(&xb)?;
            c.counts.push(&xc)?;
        }
        Ok::<_, CliError>(c)
    })?;

    let mut bits = CorrelationAccumulator::new(nt);
    let mut counts = CorrelationAccumulator::new(nt);
    let mut nvm = vec![0u64; n];
    let mut ones = vec![0u64; n];
    let mut bytes = Vec::new();
    match r.output.records {
        RecordFormat::Binary => {
            let header = ShotsHeader {
                n_nvs: n as u32,
                n_shots: r.shots,
                seed: r.seed,
                sequence_hash: engine.sequence_hash(),
                config_hash: hex_to_bytes(hash),
            };
            bytes.extend(header.encode());
        }
        RecordFormat::Csv => bytes.extend(formats::shots_csv_header(n, r.seed, hash).into_bytes()),
        RecordFormat::None => {}
    }
    for p in parts {
        bytes.extend(p.bytes);
        bits.merge(&p.bits)?;
        counts.merge(&p.counts)?;
        for i in 0..n {
            nvm[i] += p.nvm[i];
            ones[i] += p.ones[i];
        }
    }
    match r.output.records {
        RecordFormat::Binary => formats::write_atomic(&out.join(SHOTS_BIN), &bytes)?,
        RecordFormat::Csv => formats::write_atomic(&out.join(SHOTS_CSV), &bytes)?,
        RecordFormat::None => {}
    }

    let m_bits = bits.finish();
    let m_counts = counts.finish();
    if let Ok(m) = &m_bits {
        formats::write_atomic(&out.join("corr_bits.tsv"), formats::encode_matrix(&r.targets, &m.r).as_bytes())?;
    }
    if let Ok(m) = &m_counts {
        formats::write_atomic(&out.join("corr_counts.tsv"), formats::encode_matrix(&r.targets, &m.r).as_bytes())?;
    }
    let frames = write_frames(r, &nvs, &engine, out)?;

    let thresholds = engine.thresholds();
    let per_nv: Vec<Value> = nvs
        .iter()
        .enumerate()
        .map(|(i, nv)| {
            json!({
                "id": nv.id,
                "orientation": format!("{:?}", nv.orientation),
                "target": r.targets.contains(&i),
                "scc_fidelity_given_ms1": num(nv.scc_fidelity_given_ms1),
                "threshold": num(thresholds[i]),
                "nvm_fraction": num(nvm[i] as f64 / r.shots as f64),
                "bit_fraction": num(ones[i] as f64 / r.shots as f64),
            })
        })
        .collect();
    let mut body = json!({
        "targets": r.targets,
        "sequence_hash": format!("{:016x}", engine.sequence_hash()),
        "per_nv": per_nv,
        "correlation_bits": matrix_value(&m_bits),
        "correlation_counts": matrix_value(&m_counts),
        "frames": frames,
    });
    if let (Some(p), Ok(m)) = (r.scenario.pattern(), &m_bits) {
        if p != CorrelationPattern::Reference {
            let (hit, total) = sign_matches(p, &nvs, &r.targets, m);
            body["sign_pattern"] = json!({ "matching_pairs": hit, "pairs": total });
        }
    }
    Ok(body)
}

fn hex_to_bytes(h: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&h[2 * i..2 * i + 2], 16).expect("hash is hex");
    }
    debug_assert_eq!(hex(&out), h);
    out
}

/// Renders the first `output.frames` shots as PGM frames, with a slowly
/// wandering camera offset.
fn write_frames(r: &Resolved, nvs: &[NvCenter], engine: &ShotEngine, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let n = (r.output.frames as u64).min(r.shots);
    if n == 0 {
        return Ok(vec![]);
    }
    let mut walk = BaselineWalk { value_adu: 100.0, step_adu: 0.5, min_adu: 95.0, max_adu: 105.0 };
    let mut walk_rng = stream_rng(r.seed, tags::BASELINE, 0);
    let dir = out.join("frames");
    let mut names = Vec::new();
    for (i, shot) in engine.run_range(0..n).iter().enumerate() {
        let baseline = walk.next(&mut walk_rng);
        let mut rng = stream_rng(r.seed, tags::FRAMES, i as u64);
        let frame = render_frame(shot, nvs, &r.camera, baseline, &mut rng)?;
        let name = PathBuf::from(format!("frame_{i:06}.pgm"));
        formats::write_atomic(&dir.join(&name), &formats::encode_pgm(&frame))?;
        names.push(PathBuf::from("frames").join(name));
    }
    Ok(names)
}
