//! End-to-end acceptance checks, shared by `nvsim reproduce` and the
//! `acceptance` test target.
//!
//! Each check runs at full size with a fixed seed and reports pass/fail, a
//! one-line detail and its wall time. A check passes only if its numbers pass
//! and it finished within its time budget.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use nvsim_core::analysis::{
    coeffs_from_rates, estimate_baseline, integrate_counts, disk_sizes, rates_from_coeffs, ConditionalInitModel,
    CorrelationAccumulator,
};
use nvsim_core::physics::{ideal_correlation_mc, phase_per_pi_pulse, qpn_correlation_gaussian, rabi_contrast, MicrowaveDrive};
use nvsim_core::planning::{
    max_n_bandwidth, max_n_relaxation, n_bandwidth_curve, n_relaxation_curve, optimal_beam_fraction,
    time_to_unit_snr_independent, Modality, ScalabilityParams,
};
use nvsim_core::rng::{derive_seed, stream_rng, tag, tags};
use nvsim_core::simulator::{
    correlation_sequence, ideal_pattern_sign, preset_nvs, render_photons, run_conditional_init_trials,
    tune_scc_ms1_for_snr, unconditional_init_mean, CameraModel, ConditionalInitStats, CorrelationPattern,
    CorrelationSettings, NvCenter, RatesConfig, ShotEngine,
};
use nvsim_core::statmodels::{fit_bimodal_samples, optimal_threshold, success_probability, ChargeState};

use crate::config::{Overrides, RecordFormat, Resolved, RunConfig, Scenario};
use crate::runner::{map_chunks, CHUNK};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone)]
pub struct Options {
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    /// `None`: no time limit.
    pub budget_s: Option<f64>,
}

impl Outcome {
    pub fn line(&self) -> String {
        let budget = self.budget_s.map(|b| format!(" / {b:.0} s")).unwrap_or_default();
        format!(
            "[{}] {:>2} {} ({:.2} s{budget}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Check = fn(&Options) -> Result<(bool, String), CliError>;

const CHECKS: [(u8, &str, Option<f64>, Check); 10] = [
    (1, "conditional init: closed form vs Monte Carlo", Some(120.0), conditional_closed_form),
    (2, "conditional init: reference trajectory", Some(60.0), conditional_reference),
    (3, "threshold and fit recovery", Some(120.0), threshold_recovery),
    (4, "microwave crosstalk formulas", Some(1.0), crosstalk_formulas),
    (5, "projection-noise correlation", Some(30.0), qpn),
    (6, "correlation experiments", Some(300.0), correlation_experiments),
    (7, "throughput model", Some(1.0), throughput),
    (8, "scalability bounds", Some(1.0), scalability),
    (9, "image pipeline round trip", Some(120.0), image_round_trip),
    (10, "determinism", None, determinism),
];

pub fn names() -> Vec<(u8, &'static str)> {
    CHECKS.iter().map(|c| (c.0, c.1)).collect()
}

/// Runs the checks in `only` (all if empty), calling `report` after each.
pub fn run(opts: &Options, only: &[u8], mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let mut out = Vec::new();
    for &(id, name, budget_s, check) in &CHECKS {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let res = check(opts);
        let seconds = t.elapsed().as_secs_f64();
        let (mut passed, mut detail) = match res {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(b) = budget_s {
            if seconds > b {
                passed = false;
                detail.push_str(&format!("; over time budget ({seconds:.1} s > {b} s)"));
            }
        }
        let o = Outcome { id, name, passed, detail, seconds, budget_s };
        report(&o);
        out.push(o);
    }
    out
}

fn close(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

/// Random rates with a well-posed closed form and a physical Monte Carlo.
pub fn random_rates<R: Rng>(rng: &mut R) -> RatesConfig {
    loop {
        let r = RatesConfig {
            fidelity_nvm: rng.random_range(0.75..0.99),
            fidelity_nv0: rng.random_range(0.75..0.99),
            survival_nvm: rng.random_range(0.8..1.0),
            init_success: rng.random_range(0.3..0.95),
        };
        if r.physical_survival().is_ok() && coeffs_from_rates(&r).map(|m| m.c1.abs() < 0.999).unwrap_or(false) {
            return r;
        }
    }
}

fn conditional_closed_form(o: &Options) -> Result<(bool, String), CliError> {
    const N: usize = 10;
    const ATTEMPTS: usize = 10;
    const TRIALS: u64 = 10_000;
    let mut rng = stream_rng(o.seed, tags::RATES, 0);
    let mut beyond = 0;
    let mut worst: f64 = 0.0;
    let mut total = 0;
    for c in 0..50u64 {
        let rates = random_rates(&mut rng);
        let seed = derive_seed(o.seed, tag(b"closed-form"), c);
        let parts = map_chunks(TRIALS, 1000, o.threads, |r| run_conditional_init_trials(N, ATTEMPTS, &rates, r, seed))?;
        let mut stats = ConditionalInitStats::new(ATTEMPTS);
        for p in &parts {
            stats.merge(p)?;
        }
        let traj = stats.finish();
        let model = coeffs_from_rates(&rates)?;
        let pred = model.predict_trajectory(N, rates.false_nvm() * N as f64, ATTEMPTS as u32)?;
        for i in 1..=ATTEMPTS {
            let z = (traj.mean[i] - pred[i]) / traj.std_error[i];
            worst = worst.max(z.abs());
            beyond += (z.abs() > 3.0) as usize;
            total += 1;
        }
    }
    Ok((
        beyond == 0,
        format!("{beyond}/{total} comparisons beyond 3 SE (about {:.1} expected by chance), max |z| = {worst:.2}", total as f64 * 0.0027),
    ))
}

fn conditional_reference(o: &Options) -> Result<(bool, String), CliError> {
    let model = ConditionalInitModel { c1: 0.225, c2: 0.705 };
    let n3 = model.predict(10, 0.66, 3)?;
    let ss = model.steady_state(10)?;
    let rates = rates_from_coeffs(&model, 0.95, 0.934)?;
    let mc = unconditional_init_mean(10, &rates, 100_000, derive_seed(o.seed, tag(b"unconditional"), 0))?;
    let ok = close(n3, 9.00, 0.05) && close(ss, 9.10, 0.05) && close(mc.mean, 7.7, 0.2);
    Ok((
        ok,
        format!(
            "n3 = {n3:.4}, steady state = {ss:.4}, unconditional mean = {:.3} ± {:.3} (a = {:.4}, b = {:.4})",
            mc.mean, mc.std_error, rates.survival_nvm, rates.init_success
        ),
    ))
}

/// Threshold maximizing the success probability of `model` on a 0.01-count grid.
fn grid_threshold(model: &nvsim_core::statmodels::BimodalChargeModel) -> f64 {
    let lo = model.mode_nv0.location - 5.0 * model.mode_nv0.scale;
    let hi = model.mode_nvm.location + 5.0 * model.mode_nvm.scale;
    let steps = ((hi - lo) / 0.01) as usize;
    (0..=steps)
        .map(|k| lo + 0.01 * k as f64)
        .max_by(|a, b| success_probability(model, *a).total_cmp(&success_probability(model, *b)))
        .expect("non-empty grid")
}

fn threshold_recovery(o: &Options) -> Result<(bool, String), CliError> {
    const SAMPLES: usize = 50_000;
    let base = preset_nvs()[0].brightness_model;
    let results = map_chunks(20, 1, o.threads, |seeds| {
        let s = seeds.start;
        let mut rng = stream_rng(o.seed, tags::SAMPLING, s);
        let truth = base.with_p_nv0(rng.random_range(0.2..0.8))?;
        let mut samples = Vec::with_capacity(SAMPLES);
        let mut labels = Vec::with_capacity(SAMPLES);
        for _ in 0..SAMPLES {
            let (state, c) = truth.sample(&mut rng);
            samples.push(c);
            labels.push(state);
        }
        let fit = fit_bimodal_samples(&samples, None)?;
        let t = optimal_threshold(&fit.model)?.threshold;
        let t_grid = grid_threshold(&truth);
        let correct = samples
            .iter()
            .zip(&labels)
            .filter(|(&c, &l)| (c > t) == (l == ChargeState::Nvm))
            .count();
        let acc = correct as f64 / SAMPLES as f64;
        let p = success_probability(&truth, t);
        let sigma = (p * (1.0 - p) / SAMPLES as f64).sqrt();
        Ok::<_, CliError>([(fit.model.p_nv0 - truth.p_nv0).abs(), (t - t_grid).abs(), (acc - p).abs() / sigma])
    })?;
    let worst = results.iter().fold([0.0_f64; 3], |w, r| [w[0].max(r[0]), w[1].max(r[1]), w[2].max(r[2])]);
    let fails = results.iter().filter(|r| r[0] > 0.02 || r[1] > 1.0 || r[2] > 3.0).count();
    Ok((
        fails == 0,
        format!(
            "{fails}/20 seeds failing; worst |Δp0| = {:.4}, |Δt| = {:.3} counts, accuracy deviation = {:.2}σ",
            worst[0], worst[1], worst[2]
        ),
    ))
}

fn crosstalk_formulas(_: &Options) -> Result<(bool, String), CliError> {
    let drive = MicrowaveDrive::new(2.858e9, 2.813e9, 8e6, 1)?;
    let c = rabi_contrast(&drive);
    let phi = phase_per_pi_pulse(&drive)?;
    Ok((
        close(c, 0.0306, 0.0001) && close(phi, 0.070, 0.002),
        format!("off-resonant contrast = {c:.5}, phase per π pulse = {:.2} mrad", phi * 1e3),
    ))
}

fn qpn(o: &Options) -> Result<(bool, String), CliError> {
    let vars: [f64; 4] = [0.1, 0.5, 1.0, 3.0];
    let zs = map_chunks(vars.len() as u64, 1, o.threads, |k| {
        let v = vars[k.start as usize];
        let normal = rand_distr_normal(v.sqrt());
        let mut rng = stream_rng(o.seed, tags::QPN, k.start);
        let mc = ideal_correlation_mc(
            |r| {
                let phi = normal(r);
                (phi, phi)
            },
            1_000_000,
            &mut rng,
        )?;
        let exact = qpn_correlation_gaussian(v)?;
        Ok::<_, CliError>((mc.mean - exact) / mc.std_error)
    })?;
    let limit = qpn_correlation_gaussian(50.0)?;
    let worst = zs.iter().fold(0.0_f64, |a, z| a.max(z.abs()));
    Ok((
        worst <= 3.0 && close(limit, 0.5, 0.001),
        format!("max |z| = {worst:.2} over σ² ∈ {{0.1, 0.5, 1, 3}}, large-variance limit = {limit:.6}"),
    ))
}

fn rand_distr_normal(sigma: f64) -> impl Fn(&mut nvsim_core::rng::SimRng) -> f64 {
    move |r| sigma * r.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Preset NVs 0..10 with the m_s=±1 SCC fidelity tuned to single-shot SNR `k`.
pub fn tuned_preset(settings: &CorrelationSettings, k: f64) -> Result<(Vec<NvCenter>, Vec<usize>), CliError> {
    let mut nvs = preset_nvs();
    let targets: Vec<usize> = (0..10).collect();
    for &t in &targets {
        nvs[t].scc_fidelity_given_ms1 = tune_scc_ms1_for_snr(&nvs[t], settings, k)?;
    }
    Ok((nvs, targets))
}

fn correlation_experiments(o: &Options) -> Result<(bool, String), CliError> {
    const SHOTS: u64 = 200_000;
    let settings = CorrelationSettings::default();
    let (nvs, targets) = tuned_preset(&settings, 0.25)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, pattern) in [
        CorrelationPattern::Reference,
        CorrelationPattern::Block,
        CorrelationPattern::Checkerboard,
        CorrelationPattern::Orientation,
    ]
    .into_iter()
    .enumerate()
    {
        let seq = correlation_sequence(pattern, &nvs, &targets, &settings)?;
        let engine = ShotEngine::new(&nvs, &seq, derive_seed(o.seed, tag(b"correlation"), p as u64))?;
        let accs = map_chunks(SHOTS, CHUNK, o.threads, |r| {
            let mut acc = CorrelationAccumulator::new(targets.len());
            let mut x = vec![0.0; targets.len()];
            for s in engine.run_range(r) {
                for (k, &t) in targets.iter().enumerate() {
                    x[k] = s.nvs[t].charge_bit as u8 as f64;
                }
                acc.push(&x)?;
            }
            Ok::<_, CliError>(acc)
        })?;
        let mut acc = CorrelationAccumulator::new(targets.len());
        for a in &accs {
            acc.merge(a)?;
        }
        let m = acc.finish()?;
        let pairs: Vec<(usize, usize)> = (0..10).flat_map(|i| (i + 1..10).map(move |j| (i, j))).collect();
        let mean_abs = pairs.iter().map(|&(i, j)| m.get(i, j).abs()).sum::<f64>() / pairs.len() as f64;
        if pattern == CorrelationPattern::Reference {
            let max_abs = pairs.iter().map(|&(i, j)| m.get(i, j).abs()).fold(0.0, f64::max);
            ok &= max_abs < 0.008;
            parts.push(format!("reference max |r| = {max_abs:.4}"));
        } else {
            let hits = pairs
                .iter()
                .filter(|&&(i, j)| m.get(i, j) * ideal_pattern_sign(pattern, &nvs, &targets, i, j) > 0.0)
                .count();
            ok &= hits == pairs.len() && (0.015..=0.03).contains(&mean_abs);
            parts.push(format!("{pattern:?}: {hits}/45 signs, mean |r| = {mean_abs:.4}").to_lowercase());
        }
    }
    Ok((ok, parts.join("; ")))
}

fn throughput(_: &Options) -> Result<(bool, String), CliError> {
    let conv = Modality::ConventionalSerial.preset(100e-6);
    let scc = Modality::SccParallel.preset(100e-6);
    let ratio = |n| -> Result<f64, CliError> {
        Ok(time_to_unit_snr_independent(&conv, n)? / time_to_unit_snr_independent(&scc, n)?)
    };
    let (r10, r100) = (ratio(10)?, ratio(100)?);
    Ok((r10 > 1.05 && close(r100, 10.8, 0.5), format!("speedup at n = 10: {r10:.4}, at n = 100: {r100:.3}")))
}

/// Published optimum NV counts per context, compared within ±25 %.
pub const PUBLISHED_OPTIMUM: [(&str, f64); 3] = [("bulk", 1100.0), ("shallow", 800.0), ("nanodiamond", 400.0)];

fn scalability(_: &Options) -> Result<(bool, String), CliError> {
    let ctx = ScalabilityParams::contexts(0.59);
    let bulk = ctx[0].1;
    let relax = max_n_relaxation(bulk.sq_relaxation_rate_hz, bulk.aod_access_time_s, 1.0);
    let bw = max_n_bandwidth(0.59, 2.76, 45.0, 1.0);
    let mut ok = relax == 500 && close(bw as f64, 9100.0, 100.0);
    let mut parts = vec![format!("relaxation bound {relax}, bandwidth bound {bw}")];
    for ((name, p), (_, published)) in ctx.iter().zip(PUBLISHED_OPTIMUM) {
        let opt = optimal_beam_fraction(p)?;
        // independent closed form: 1/(3Ωτs) = d(sD)² at s³ = n_r(1)/n_b(1)
        let nr = n_relaxation_curve(p.sq_relaxation_rate_hz, p.aod_access_time_s, 1.0);
        let nb = n_bandwidth_curve(p.nv_density_per_um2, p.dispersion_um_per_mhz, p.rf_bandwidth_mhz, 1.0);
        let s = (nr / nb).cbrt();
        let analytic = close(opt.beam_fraction, s, 1e-9) && close(opt.n_max, nr / s, 1e-6 * nr / s);
        let ratio = opt.n_max / published;
        ok &= analytic && (0.75..=1.25).contains(&ratio);
        parts.push(format!("{name}: s* = {:.4}, n* = {:.1} ({ratio:.2}x published {published})", opt.beam_fraction, opt.n_max));
    }
    Ok((ok, parts.join("; ")))
}

/// `n` positions (µm) whose integration disks fit on the unmasked ROI,
/// at least `min_sep_px` apart.
pub fn random_layout<R: Rng>(cam: &CameraModel, n: usize, min_sep_px: f64, rng: &mut R) -> Vec<[f64; 2]> {
    let r = cam.integration_radius_px + 1.0;
    let (x0, x1) = (cam.mask_width_px as f64 + r, cam.width_px as f64 - 1.0 - r);
    let (y0, y1) = (r, cam.height_px as f64 - 1.0 - r);
    'retry: loop {
        let mut px: Vec<[f64; 2]> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut tries = 0;
            loop {
                let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
                if px.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_sep_px) {
                    px.push(p);
                    break;
                }
                tries += 1;
                if tries > 10_000 {
                    continue 'retry;
                }
            }
        }
        return px
            .iter()
            .map(|p| [(p[0] - cam.origin_px[0]) * cam.um_per_px, (p[1] - cam.origin_px[1]) * cam.um_per_px])
            .collect();
    }
}

/// `rᵀ C⁻¹ r` for `C = diag(d) + c v vᵀ` (Sherman-Morrison).
pub fn chi2_diag_plus_rank1(r: &[f64], d: &[f64], c: f64, v: &[f64]) -> f64 {
    let a: f64 = r.iter().zip(d).map(|(x, d)| x * x / d).sum();
    let b: f64 = r.iter().zip(d).zip(v).map(|((x, d), v)| x * v / d).sum();
    let e: f64 = v.iter().zip(d).map(|(v, d)| v * v / d).sum();
    a - c * b * b / (1.0 + c * e)
}

fn image_round_trip(o: &Options) -> Result<(bool, String), CliError> {
    const LAYOUTS: u64 = 100;
    const N: usize = 13;
    let noisy_cam = CameraModel::default();
    let quiet_cam = CameraModel { noiseless: true, ..noisy_cam };
    let template = preset_nvs()[0].clone();
    let results = map_chunks(LAYOUTS, 1, o.threads, |l| {
        let l = l.start;
        let mut rng = stream_rng(o.seed, tags::LAYOUT, l);
        let nvs: Vec<NvCenter> = random_layout(&noisy_cam, N, 30.0, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(id, position_um)| NvCenter { id, position_um, ..template.clone() })
            .collect();
        let photons: Vec<f64> = (0..N).map(|_| rng.random_range(20.0..200.0)).collect();
        let baseline = rng.random_range(90.0..110.0);

        let frame = render_photons(&photons, &nvs, &quiet_cam, baseline, &mut rng)?;
        let b = estimate_baseline(&frame, &quiet_cam)?;
        let expected = integrate_counts(&frame, &nvs, &quiet_cam, b.baseline_adu)?;
        let worst_rel = expected.iter().zip(&photons).map(|(e, p)| ((e - p) / p).abs()).fold(0.0, f64::max);

        let mut frng = stream_rng(o.seed, tags::FRAMES, l);
        let frame = render_photons(&photons, &nvs, &noisy_cam, baseline, &mut frng)?;
        let b = estimate_baseline(&frame, &noisy_cam)?;
        let got = integrate_counts(&frame, &nvs, &noisy_cam, b.baseline_adu)?;
        let npix: Vec<f64> = disk_sizes(&nvs, &noisy_cam).into_iter().map(|n| n as f64).collect();
        let g2 = noisy_cam.adu_per_photon * noisy_cam.adu_per_photon;
        let read2 = noisy_cam.read_noise_adu * noisy_cam.read_noise_adu;
        // shot noise plus read noise of the disk, then the shared error of
        // the median baseline, which moves every disk by npix · δb
        let d: Vec<f64> = expected.iter().zip(&npix).map(|(e, n)| e + n * read2 / g2).collect();
        let n_mask = (noisy_cam.mask_width_px * noisy_cam.height_px) as f64;
        let c = std::f64::consts::FRAC_PI_2 * read2 / n_mask / g2;
        let r: Vec<f64> = got.iter().zip(&expected).map(|(g, e)| g - e).collect();
        Ok::<_, CliError>((worst_rel, chi2_diag_plus_rank1(&r, &d, c, &npix)))
    })?;
    let worst_rel = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let chi2: f64 = results.iter().map(|r| r.1).sum();
    let dof = (LAYOUTS as usize * N) as f64;
    let total = ChiSquared::new(dof).map_err(|e| CliError::Runtime(e.to_string()))?;
    let (lo, hi) = (total.inverse_cdf(0.00135), total.inverse_cdf(0.99865));
    let per_layout = ChiSquared::new(N as f64).map_err(|e| CliError::Runtime(e.to_string()))?.inverse_cdf(0.9973);
    let over = results.iter().filter(|r| r.1 > per_layout).count();
    Ok((
        worst_rel <= 0.005 && (lo..=hi).contains(&chi2),
        format!(
            "noiseless worst error {:.4} %; noisy χ² = {chi2:.1} over {dof} dof (3σ band {lo:.1}..{hi:.1}), {over}/100 layouts above their own 3σ level",
            worst_rel * 100.0
        ),
    ))
}

fn files_under(dir: &Path) -> Result<Vec<std::path::PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| CliError::io(&d, e))? {
            let p = e.map_err(|e| CliError::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reduced-size configuration of `scenario` for the determinism check.
pub fn small_config(scenario: Scenario) -> RunConfig {
    let mut cfg = RunConfig { scenario: Some(scenario.name().into()), ..RunConfig::default() };
    match scenario {
        Scenario::Fig2ConditionalInit => cfg.shots = Some(3000),
        Scenario::Fig3Esr => {
            cfg.shots = Some(300);
            cfg.esr.points = 5;
        }
        Scenario::Custom => {
            let nvs = preset_nvs();
            let targets: Vec<usize> = (0..10).collect();
            cfg.sequence = Some(
                correlation_sequence(CorrelationPattern::Checkerboard, &nvs, &targets, &CorrelationSettings::default())
                    .expect("preset sequence is valid"),
            );
            cfg.output.records = RecordFormat::Csv;
            cfg.shots = Some(3000);
        }
        _ => {
            cfg.shots = Some(9000);
            cfg.output.frames = 2;
        }
    }
    cfg
}

fn determinism(o: &Options) -> Result<(bool, String), CliError> {
    let tmp = tempfile::tempdir().map_err(|e| CliError::io(std::env::temp_dir(), e))?;
    let mut bad = Vec::new();
    let mut n_files = 0;
    for scenario in Scenario::ALL {
        let mut dirs = Vec::new();
        for (run, threads) in [(0, 1), (1, 4), (2, 4)] {
            let ov = Overrides { seed: Some(o.seed), threads: Some(threads), ..Default::default() };
            let r = Resolved::new(small_config(scenario), ov)?;
            let dir = tmp.path().join(format!("{}-{run}", scenario.name()));
            crate::scenarios::simulate(&r, &dir)?;
            dirs.push(dir);
        }
        let files = files_under(&dirs[0])?;
        n_files += files.len();
        for d in &dirs[1..] {
            if files_under(d)? != files {
                bad.push(format!("{}: file sets differ", scenario.name()));
                continue;
            }
            for f in &files {
                if crate::formats::read(&dirs[0].join(f))? != crate::formats::read(&d.join(f))? {
                    bad.push(format!("{}/{}", scenario.name(), f.display()));
                }
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{n_files} files over {} scenarios identical across re-runs and 1 vs 4 threads", Scenario::ALL.len())
    } else {
        format!("differing: {}", bad.join(", "))
    };
    Ok((bad.is_empty(), detail))
}
