//! The five commands. `main.rs` only parses flags and maps errors to exit
//! codes.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};

use nvsim_core::analysis::{
    estimate_baseline, fit_conditional_model, integrate_counts, rates_from_coeffs, CorrelationAccumulator,
    CorrelationMatrix,
};
use nvsim_core::planning::{
    crossover_n, independent_table, max_n_bandwidth_aods, max_n_relaxation, optimal_beam_fraction, scalability_curves,
    time_to_unit_snr_correlated, time_to_unit_snr_independent, AodChannel, CorrelatedMode, Modality, ScalabilityParams,
};
use nvsim_core::simulator::{preset_nvs, CameraModel, NvCenter, ShotRecord};
use nvsim_core::statmodels::{fit_bimodal, fit_bimodal_samples, optimal_threshold, BimodalFit, CountHistogram};

use crate::acceptance::{self, PUBLISHED_OPTIMUM};
use crate::config::{default_out_dir, ConditionalConfig, Overrides, Resolved, RunConfig, Scenario};
use crate::formats;
use crate::runner::map_chunks;
use crate::scenarios::{self, sign_matches, write_json, CONFIG_FILE, SHOTS_BIN, SHOTS_CSV, TRAJECTORY_FILE};
use crate::{sig9, CliError};

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scenario: Option<String>,
    pub shots: Option<u64>,
    pub threads: Option<usize>,
}

impl Common {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let ov = Overrides {
            seed: self.seed,
            scenario: self.scenario.clone(),
            shots: self.shots,
            threads: self.threads,
        };
        Resolved::new(cfg, ov)
    }
}

fn num(x: f64) -> Value {
    sig9(x).parse::<f64>().map(Value::from).unwrap_or(Value::Null)
}

pub fn simulate(c: &Common) -> Result<(PathBuf, Value), CliError> {
    let r = c.resolve()?;
    let out = c.out.clone().unwrap_or_else(|| default_out_dir(r.scenario));
    let summary = scenarios::simulate(&r, &out)?;
    Ok((out, summary))
}

/// What an analysis needs to know about the run that produced its input.
#[derive(Debug, Clone)]
pub struct Context {
    pub nvs: Vec<NvCenter>,
    pub targets: Vec<usize>,
    pub camera: CameraModel,
    pub scenario: Option<Scenario>,
    pub conditional: ConditionalConfig,
}

#[derive(Deserialize)]
struct Saved {
    resolved: SavedResolved,
}

#[derive(Deserialize)]
struct SavedResolved {
    scenario: Scenario,
    nvs: Vec<NvCenter>,
    targets: Vec<usize>,
    camera: CameraModel,
    conditional: ConditionalConfig,
}

impl Context {
    fn from_resolved(r: &Resolved) -> Self {
        Self {
            nvs: r.nvs.clone(),
            targets: r.targets.clone(),
            camera: r.camera,
            scenario: Some(r.scenario),
            conditional: r.conditional.clone(),
        }
    }

    fn from_saved(path: &Path) -> Result<Self, CliError> {
        let s: Saved = serde_json::from_str(&formats::read_text(path)?)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let r = s.resolved;
        Ok(Self { nvs: r.nvs, targets: r.targets, camera: r.camera, scenario: Some(r.scenario), conditional: r.conditional })
    }

    fn default_for(n_nvs: usize) -> Self {
        let mut nvs = preset_nvs();
        nvs.truncate(n_nvs);
        Self {
            targets: (0..nvs.len()).filter(|&i| nvs[i].usable()).collect(),
            nvs,
            camera: CameraModel::default(),
            scenario: None,
            conditional: ConditionalConfig::default(),
        }
    }
}

/// `--config` wins, then a `config.json` next to the input.
fn context_for(input_dir: &Path, c: &Common) -> Result<Option<Context>, CliError> {
    if c.config.is_some() {
        return Ok(Some(Context::from_resolved(&c.resolve()?)));
    }
    let saved = input_dir.join(CONFIG_FILE);
    if saved.is_file() {
        return Ok(Some(Context::from_saved(&saved)?));
    }
    Ok(None)
}

enum Input {
    Shots(Vec<ShotRecord>),
    Trajectory(Vec<Vec<f64>>),
    Histogram(CountHistogram),
    Samples(Vec<f64>),
    Frame,
}

fn classify(path: &Path) -> Result<Input, CliError> {
    if path.extension().is_some_and(|e| e == "pgm") {
        return Ok(Input::Frame);
    }
    let bytes = formats::read(path)?;
    if formats::is_shots_binary(&bytes) {
        return Ok(Input::Shots(formats::decode_shots_binary(&bytes, path)?.1));
    }
    let text = String::from_utf8(bytes).map_err(|_| CliError::Runtime(format!("{}: unrecognized binary file", path.display())))?;
    if text.lines().any(|l| l.starts_with("shot_index")) {
        return Ok(Input::Shots(formats::decode_shots_csv(&text, path)?.1));
    }
    let rows = formats::parse_columns(&text, path)?;
    match rows.first().map(Vec::len) {
        None => Err(CliError::Runtime(format!("{}: no data", path.display()))),
        Some(1) => Ok(Input::Samples(rows.into_iter().map(|r| r[0]).collect())),
        Some(2) => Ok(Input::Histogram(formats::histogram_from_rows(&rows, path)?)),
        Some(_) if text.starts_with("attempt") => Ok(Input::Trajectory(rows)),
        Some(w) => Err(CliError::Runtime(format!("{}: don't know what to do with {w} columns", path.display()))),
    }
}

fn fit_value(fit: &BimodalFit) -> Result<Value, CliError> {
    let th = optimal_threshold(&fit.model)?;
    let m = &fit.model;
    let mode = |p: &nvsim_core::statmodels::SkewNormalParams| {
        json!({ "location": num(p.location), "scale": num(p.scale), "shape": num(p.shape) })
    };
    Ok(json!({
        "method": format!("{:?}", fit.method),
        "p_nv0": num(m.p_nv0),
        "mode_nv0": mode(&m.mode_nv0),
        "mode_nvm": mode(&m.mode_nvm),
        "std_errors": fit.std_errors.map(|s| json!({
            "p_nv0": num(s.p_nv0),
            "mode_nv0": mode(&s.mode_nv0),
            "mode_nvm": mode(&s.mode_nvm),
        })),
        "chi2_per_dof": num(fit.chi2_per_dof),
        "iterations": fit.iterations,
        "threshold": num(th.threshold),
        "fidelity_nv0": num(th.fidelity_nv0),
        "fidelity_nvm": num(th.fidelity_nvm),
        "weighted_success": num(th.weighted_success),
    }))
}

fn analyze_trajectory(rows: &[Vec<f64>], ctx: &Context) -> Result<Value, CliError> {
    let means: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let se: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let n = ctx.conditional.n_nvs;
    let fit = fit_conditional_model(&means, n)?;
    let pred = fit.model.predict_trajectory(n, means[0], (means.len() - 1) as u32)?;
    let dof = means.len().saturating_sub(3).max(1);
    let chi2: f64 = (1..means.len()).filter(|&i| se[i] > 0.0).map(|i| ((means[i] - pred[i]) / se[i]).powi(2)).sum();
    let rates = rates_from_coeffs(&fit.model, ctx.conditional.fidelity_nvm, ctx.conditional.fidelity_nv0).ok();
    Ok(json!({
        "c1": num(fit.model.c1),
        "c1_std_error": num(fit.std_errors[0]),
        "c2": num(fit.model.c2),
        "c2_std_error": num(fit.std_errors[1]),
        "rms_residual": num(fit.rms_residual),
        "chi2_per_dof": num(chi2 / dof as f64),
        "steady_state": fit.model.steady_state(n).ok().map(num),
        "implied_survival_nvm": rates.map(|r| num(r.survival_nvm)),
        "implied_init_success": rates.map(|r| num(r.init_success)),
    }))
}

fn bit_matrix(records: &[ShotRecord], targets: &[usize], bit: impl Fn(&ShotRecord, usize) -> bool) -> Result<CorrelationMatrix, CliError> {
    let mut acc = CorrelationAccumulator::new(targets.len());
    let mut x = vec![0.0; targets.len()];
    for r in records {
        for (k, &t) in targets.iter().enumerate() {
            x[k] = bit(r, t) as u8 as f64;
        }
        acc.push(&x)?;
    }
    Ok(acc.finish()?)
}

fn analyze_shots(records: &[ShotRecord], ctx: &Context, threads: usize, out: &Path) -> Result<Value, CliError> {
    let n = records.first().map(|r| r.nvs.len()).unwrap_or(0);
    if n == 0 {
        return Err(CliError::Runtime("shot file holds no records".into()));
    }
    let targets: Vec<usize> = ctx.targets.iter().copied().filter(|&t| t < n).collect();
    let fits = map_chunks(n as u64, 1, threads, |i| {
        let i = i.start as usize;
        let counts: Vec<f64> = records.iter().map(|r| r.nvs[i].counts).collect();
        Ok::<_, CliError>(fit_bimodal_samples(&counts, None).map_err(|e| e.to_string()))
    })?;
    let mut thresholds = Vec::with_capacity(n);
    let mut per_nv = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (i, f) in fits.iter().enumerate() {
        let given = ctx.nvs.get(i).and_then(|nv| optimal_threshold(&nv.brightness_model).ok()).map(|t| t.threshold);
        let bit_fraction = records.iter().filter(|r| r.nvs[i].charge_bit).count() as f64 / records.len() as f64;
        let (t, fitted) = match f {
            Ok(fit) => {
                let v = fit_value(fit)?;
                (v["threshold"].as_f64().unwrap_or(f64::NAN), v)
            }
            Err(e) => (given.unwrap_or(f64::NAN), json!({ "error": e })),
        };
        thresholds.push(t);
        rows.push(vec![i as f64, t, given.unwrap_or(f64::NAN), bit_fraction]);
        per_nv.push(json!({ "nv": i, "fit": fitted, "model_threshold": given.map(num), "bit_fraction": num(bit_fraction) }));
    }
    let table = formats::encode_table(&["nv", "fitted_threshold", "model_threshold", "bit_fraction"], &rows);
    formats::write_atomic(&out.join("thresholds.tsv"), table.as_bytes())?;

    let mut report = json!({ "n_shots": records.len(), "n_nvs": n, "targets": targets, "per_nv": per_nv });
    let matrices = [
        ("recorded_bits", bit_matrix(records, &targets, |r, t| r.nvs[t].charge_bit)),
        ("refit_bits", bit_matrix(records, &targets, |r, t| r.nvs[t].counts > thresholds[t])),
    ];
    for (name, m) in matrices {
        match m {
            Ok(m) => {
                formats::write_atomic(&out.join(format!("corr_{name}.tsv")), formats::encode_matrix(&targets, &m.r).as_bytes())?;
                let mut v = json!({ "mean_off_diagonal": num(m.mean_off_diagonal()), "std_error": num(m.std_error) });
                if let Some(p) = ctx.scenario.and_then(Scenario::pattern) {
                    if p != nvsim_core::simulator::CorrelationPattern::Reference {
                        let (hit, total) = sign_matches(p, &ctx.nvs, &targets, &m);
                        v["sign_pattern"] = json!({ "matching_pairs": hit, "pairs": total });
                    }
                }
                report[name] = v;
            }
            Err(e) => report[name] = json!({ "error": e.to_string() }),
        }
    }
    Ok(report)
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    v.sort();
    Ok(v)
}

fn analyze_frames(frames: &[PathBuf], ctx: &Context, out: &Path) -> Result<Value, CliError> {
    let mut rows = Vec::new();
    let mut contaminated = 0;
    for (k, p) in frames.iter().enumerate() {
        let frame = formats::decode_pgm(&formats::read(p)?, p)?;
        let b = estimate_baseline(&frame, &ctx.camera)?;
        contaminated += b.contaminated as usize;
        let counts = integrate_counts(&frame, &ctx.nvs, &ctx.camera, b.baseline_adu)?;
        let mut row = vec![k as f64, b.baseline_adu, b.noise_adu];
        row.extend(counts);
        rows.push(row);
    }
    let labels: Vec<String> = ["frame", "baseline_adu", "noise_adu"]
        .iter()
        .map(|s| s.to_string())
        .chain(ctx.nvs.iter().map(|nv| format!("nv{}", nv.id)))
        .collect();
    let header: Vec<&str> = labels.iter().map(String::as_str).collect();
    formats::write_atomic(&out.join("frame_counts.tsv"), formats::encode_table(&header, &rows).as_bytes())?;
    Ok(json!({ "frames": frames.len(), "contaminated_baselines": contaminated }))
}

/// Analyzes a simulate output directory or a single file. Returns the
/// output directory and the report.
pub fn analyze(input: &Path, c: &Common) -> Result<(PathBuf, Value), CliError> {
    if !input.exists() {
        return Err(CliError::io(input, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
    }
    let dir = if input.is_dir() { input.to_path_buf() } else { input.parent().unwrap_or(Path::new(".")).to_path_buf() };
    let out = c.out.clone().unwrap_or_else(|| dir.join("analysis"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let threads = crate::config::thread_count(c.threads, None)?;
    let ctx = context_for(&dir, c)?;

    let mut inputs = Vec::new();
    let mut frames = Vec::new();
    if input.is_dir() {
        for name in [TRAJECTORY_FILE, SHOTS_BIN, SHOTS_CSV] {
            let p = input.join(name);
            if p.is_file() {
                inputs.push(p);
            }
        }
        let fdir = input.join("frames");
        if fdir.is_dir() {
            frames = frame_files(&fdir)?;
        }
        if inputs.is_empty() && frames.is_empty() {
            return Err(CliError::Runtime(format!("{}: nothing to analyze", input.display())));
        }
    } else if input.extension().is_some_and(|e| e == "pgm") {
        frames.push(input.to_path_buf());
    } else {
        inputs.push(input.to_path_buf());
    }

    let mut report = serde_json::Map::new();
    report.insert("input".into(), json!(input.display().to_string()));
    for p in &inputs {
        let key = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let v = match classify(p)? {
            Input::Shots(records) => {
                let ctx = ctx.clone().unwrap_or_else(|| Context::default_for(records.first().map_or(0, |r| r.nvs.len())));
                analyze_shots(&records, &ctx, threads, &out)?
            }
            Input::Trajectory(rows) => analyze_trajectory(&rows, &ctx.clone().unwrap_or_else(|| Context::default_for(0)))?,
            Input::Histogram(h) => fit_value(&fit_bimodal(&h, None)?)?,
            Input::Samples(s) => fit_value(&fit_bimodal_samples(&s, None)?)?,
            Input::Frame => unreachable!("frames are collected separately"),
        };
        report.insert(key, v);
    }
    if !frames.is_empty() {
        let ctx = ctx.clone().unwrap_or_else(|| Context::default_for(13));
        report.insert("frames".into(), analyze_frames(&frames, &ctx, &out)?);
    }
    let report = Value::Object(report);
    write_json(&out.join("analysis.json"), &report)?;
    Ok((out, report))
}

/// Fits the two-mode count model to a histogram (two columns) or to raw
/// samples (one column).
pub fn fit(input: &Path, c: &Common) -> Result<Value, CliError> {
    let fit = match classify(input)? {
        Input::Histogram(h) => fit_bimodal(&h, None)?,
        Input::Samples(s) => fit_bimodal_samples(&s, None)?,
        _ => return Err(CliError::Runtime(format!("{}: expected a histogram or a sample column", input.display()))),
    };
    let v = fit_value(&fit)?;
    if let Some(out) = &c.out {
        write_json(&out.join("fit.json"), &v)?;
    }
    Ok(v)
}

pub fn plan(c: &Common) -> Result<(PathBuf, Value), CliError> {
    let r = c.resolve()?;
    let p = &r.planning;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out").join("plan"));
    let t_i = p.t_interrogate_s;
    let ns = &p.n_values;

    let table = independent_table(t_i, ns)?;
    let rows: Vec<Vec<f64>> =
        table.iter().map(|(n, t)| std::iter::once(*n as f64).chain(t.iter().copied()).collect()).collect();
    let mut header = vec!["n"];
    header.extend(Modality::ALL.iter().map(|m| m.name()));
    formats::write_atomic(&out.join("independent.tsv"), formats::encode_table(&header, &rows).as_bytes())?;

    let conv = Modality::ConventionalSerial.preset(t_i);
    let scc = Modality::SccParallel.preset(t_i);
    let proj = Modality::SccParallelProjected.preset(t_i);
    let mut corr_rows = Vec::new();
    for &n in ns.iter().filter(|&&n| n >= 2) {
        corr_rows.push(vec![
            n as f64,
            time_to_unit_snr_correlated(&conv, n, CorrelatedMode::Serial)?,
            time_to_unit_snr_correlated(&scc, n, CorrelatedMode::Parallel)?,
            time_to_unit_snr_correlated(&proj, n, CorrelatedMode::Parallel)?,
        ]);
    }
    let corr_header = ["n", "conventional-serial", "scc-parallel", "scc-parallel-projected"];
    formats::write_atomic(&out.join("correlated.tsv"), formats::encode_table(&corr_header, &corr_rows).as_bytes())?;

    let crossover = crossover_n(&scc, &conv, 100_000)?;
    let ratio = |n| -> Result<f64, CliError> {
        Ok(time_to_unit_snr_independent(&conv, n)? / time_to_unit_snr_independent(&scc, n)?)
    };

    let mut contexts = Vec::new();
    for ((name, params), (_, published)) in ScalabilityParams::contexts(p.nv_density_per_um2).iter().zip(PUBLISHED_OPTIMUM) {
        let curves = scalability_curves(params, 200);
        let rows: Vec<Vec<f64>> = curves.iter().map(|&(s, a, b)| vec![s, a, b]).collect();
        let t = formats::encode_table(&["beam_fraction", "n_relaxation", "n_bandwidth"], &rows);
        formats::write_atomic(&out.join(format!("scalability_{name}.tsv")), t.as_bytes())?;
        let opt = optimal_beam_fraction(params)?;
        let ratio = opt.n_max / published;
        contexts.push(json!({
            "context": name,
            "contrast_lifetime_s": num(1.0 / (3.0 * params.sq_relaxation_rate_hz)),
            "max_n_relaxation_full_beam": max_n_relaxation(params.sq_relaxation_rate_hz, params.aod_access_time_s, 1.0),
            "optimal_beam_fraction": num(opt.beam_fraction),
            "optimal_n": num(opt.n_max),
            "optimal_n_floor": opt.n_max_floor,
            "published_n": published,
            "ratio_to_published": num(ratio),
            "within_25_percent": (0.75..=1.25).contains(&ratio),
        }));
    }
    // cryogenic: relaxation never limits, the tighter deflector does
    let aods = [AodChannel::GREEN, AodChannel::RED];
    let cryo = max_n_bandwidth_aods(p.nv_density_per_um2, &aods, 1.0);
    let report = json!({
        "t_interrogate_s": num(t_i),
        "crossover_n": crossover,
        "speedup_n10": num(ratio(10)?),
        "speedup_n100": num(ratio(100)?),
        "scalability": contexts,
        "cryogenic_bandwidth_limit": cryo,
        "nv_density_per_um2": num(p.nv_density_per_um2),
    });
    write_json(&out.join("plan.json"), &report)?;
    Ok((out, report))
}

/// Runs the acceptance checks, printing one line each. Fails with
/// [`CliError::Acceptance`] if any check fails.
pub fn reproduce(c: &Common, only: &[u8]) -> Result<Vec<acceptance::Outcome>, CliError> {
    let opts = acceptance::Options {
        seed: c.seed.unwrap_or(acceptance::DEFAULT_SEED),
        threads: crate::config::thread_count(c.threads, None)?,
    };
    let outcomes = acceptance::run(&opts, only, |o| println!("{}", o.line()));
    if let Some(out) = &c.out {
        let text: String = outcomes.iter().map(|o| o.line() + "\n").collect();
        formats::write_atomic(&out.join("acceptance.txt"), text.as_bytes())?;
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    if failed.is_empty() {
        Ok(outcomes)
    } else {
        Err(CliError::Acceptance(format!("criteria {} failed", failed.join(", "))))
    }
}
