//! Mixture fitting.
//!
//! Both fitters work in normalized units `u = (x - center)/spread`, with
//! center and spread taken from the initial mode locations, and over the
//! unconstrained vector
//!
//! ```text
//! θ = [logit p0, loc0, ln scale0, shape0, loc-, ln scale-, shape-]
//! ```
//!
//! Raw samples are fitted by maximum likelihood (BFGS, analytic gradient).
//! Histograms are fitted by minimizing the Poisson deviance of the bin
//! counts, which is the binned likelihood written as a least-squares problem.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BimodalChargeModel, CountHistogram, SkewNormalParams};
use crate::error::{ensure_finite, Error, Result};
use crate::optim::{bfgs, invert, levenberg_marquardt, BfgsOptions, LsqOptions};
use crate::special::{inv_mills, ln_norm_cdf, norm_cdf, norm_pdf};

const MIN_SHOTS: usize = 1000;
const N_PARAMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    /// Maximum likelihood on raw samples.
    SampleLikelihood,
    /// Poisson deviance on histogram bins.
    BinnedPoisson,
}

/// One-sigma uncertainties in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStdErrors {
    pub p_nv0: f64,
    pub mode_nv0: SkewNormalParams,
    pub mode_nvm: SkewNormalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalFit {
    pub model: BimodalChargeModel,
    /// `None` when the information matrix is singular at the optimum.
    pub std_errors: Option<ModelStdErrors>,
    /// Poisson deviance per degree of freedom over the histogram bins.
    pub chi2_per_dof: f64,
    pub iterations: usize,
    pub method: FitMethod,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    center: f64,
    spread: f64,
}

impl Frame {
    fn from_model(m: &BimodalChargeModel) -> Self {
        let center = 0.5 * (m.mode_nv0.location + m.mode_nvm.location);
        let spread = (m.mode_nvm.location - m.mode_nv0.location).max(1e-12);
        Self { center, spread }
    }

    fn encode(&self, m: &BimodalChargeModel) -> [f64; N_PARAMS] {
        let p = m.p_nv0.clamp(1e-6, 1.0 - 1e-6);
        let e = |s: &SkewNormalParams| {
            [(s.location - self.center) / self.spread, libm::log(s.scale / self.spread), s.shape]
        };
        let a = e(&m.mode_nv0);
        let b = e(&m.mode_nvm);
        [libm::log(p / (1.0 - p)), a[0], a[1], a[2], b[0], b[1], b[2]]
    }

    fn mode(&self, t: &[f64]) -> SkewNormalParams {
        SkewNormalParams {
            location: self.center + self.spread * t[0],
            scale: self.spread * libm::exp(t[1]),
            shape: t[2],
        }
    }

    /// Decodes θ, undoing label switching so NV⁻ is the bright mode.
    fn decode(&self, t: &[f64]) -> (BimodalChargeModel, bool) {
        let p = sigmoid(t[0]);
        let a = self.mode(&t[1..4]);
        let b = self.mode(&t[4..7]);
        if b.location >= a.location {
            (BimodalChargeModel { p_nv0: p, mode_nv0: a, mode_nvm: b }, false)
        } else {
            (BimodalChargeModel { p_nv0: 1.0 - p, mode_nv0: b, mode_nvm: a }, true)
        }
    }

    fn std_errors(&self, t: &[f64], cov: &[f64], swapped: bool) -> Option<ModelStdErrors> {
        let var = |i: usize| cov[i * N_PARAMS + i];
        if (0..N_PARAMS).any(|i| !(var(i) >= 0.0) || !var(i).is_finite()) {
            return None;
        }
        let sd = |i: usize| libm::sqrt(var(i));
        let p = sigmoid(t[0]);
        let mode = |k: usize| SkewNormalParams {
            location: self.spread * sd(k),
            scale: self.spread * libm::exp(t[k + 1]) * sd(k + 1),
            shape: sd(k + 2),
        };
        let (a, b) = (mode(1), mode(4));
        let (mode_nv0, mode_nvm) = if swapped { (b, a) } else { (a, b) };
        Some(ModelStdErrors { p_nv0: p * (1.0 - p) * sd(0), mode_nv0, mode_nvm })
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// `ln sigmoid(x)`, stable for large |x|.
#[inline]
fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

fn moving_average(v: &[f64], half: usize) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Distance from `peak` to where `s` first drops below half its value,
/// walking in direction `dir`. Linear interpolation between bins.
fn half_width(s: &[f64], peak: usize, dir: isize) -> Option<f64> {
    let half = 0.5 * s[peak];
    let mut i = peak as isize;
    loop {
        let next = i + dir;
        if next < 0 || next >= s.len() as isize {
            return None;
        }
        let (a, b) = (s[i as usize], s[next as usize]);
        if b < half {
            let frac = if a > b { (a - half) / (a - b) } else { 0.5 };
            return Some((i - peak as isize).unsigned_abs() as f64 + frac);
        }
        i = next;
    }
}

/// Starting point for the fitters.
///
/// Mode locations come from the two highest peaks of the 5-bin moving
/// average, scales from the half width at half maximum on each mode's outer
/// flank, shapes from 0. The dim-state weight is the fraction of counts
/// below the smoothed valley between the peaks.
pub fn initial_guess(hist: &CountHistogram) -> Result<BimodalChargeModel> {
    let raw: Vec<f64> = hist.bin_counts().iter().map(|&c| c as f64).collect();
    let n = raw.len();
    if n < 5 {
        return Err(Error::DegenerateFit("too few bins to locate two modes".into()));
    }
    let s = moving_average(&raw, 2);
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || s[i] > s[i - 1];
            let right = i + 1 == n || s[i] >= s[i + 1];
            left && right && s[i] > 0.0
        })
        .collect();
    peaks.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let min_sep = 3.max(n / 50);
    let first = *peaks.first().ok_or_else(|| Error::DegenerateFit("empty histogram".into()))?;
    let second = peaks.iter().copied().skip(1).find(|&j| {
        let (a, b) = (first.min(j), first.max(j));
        let valley = s[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        // a 5-bin average of Poisson counts has sd sqrt(c/5)
        let significant = s[j] - valley > 3.0 * libm::sqrt(s[j] / 5.0) && s[j] > 0.02 * s[first];
        b - a >= min_sep && valley < 0.8 * s[j] && significant
    });
    let Some(second) = second else {
        return Err(Error::DegenerateFit("histogram shows a single mode".into()));
    };
    let (i0, i1) = (first.min(second), first.max(second));
    let valley = (i0..=i1).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap_or(i0);

    let centers = hist.centers();
    let width = (hist.range().1 - hist.range().0) / n as f64;
    let sigma = |peak: usize, outer: isize| {
        let hw = half_width(&s, peak, outer).or_else(|| half_width(&s, peak, -outer)).unwrap_or(1.0);
        // HWHM = sigma sqrt(2 ln 2)
        (hw * width / 1.177_410_022_515_474_7).max(0.5 * width)
    };
    let below: u64 = hist.bin_counts()[..=valley].iter().sum();
    let p0 = (below as f64 / hist.total_shots().max(1) as f64).clamp(0.01, 0.99);
    BimodalChargeModel::new(
        p0,
        SkewNormalParams::new(centers[i0], sigma(i0, -1), 0.0)?,
        SkewNormalParams::new(centers[i1], sigma(i1, 1), 0.0)?,
    )
}

fn check_fitted(model: &BimodalChargeModel) -> Result<()> {
    ensure_finite("fitted parameters", &[model.p_nv0, model.mode_nv0.location, model.mode_nvm.location])?;
    if model.p_nv0 < 1e-4 || model.p_nv0 > 1.0 - 1e-4 {
        return Err(Error::DegenerateFit("fit collapsed onto a single mode".into()));
    }
    if model.mode_nvm.location <= model.mode_nv0.location {
        return Err(Error::DegenerateFit("fitted modes coincide".into()));
    }
    model.validate()
}

/// Poisson deviance of `hist` against `model`, and the bin count used.
fn deviance(hist: &CountHistogram, model: &BimodalChargeModel) -> f64 {
    let mut out = alloc::vec![0.0; hist.n_bins()];
    deviance_residuals(hist, model, &mut out);
    out.iter().map(|r| r * r).sum()
}

fn deviance_residuals(hist: &CountHistogram, model: &BimodalChargeModel, out: &mut [f64]) {
    let n = hist.total_shots() as f64;
    let edges = hist.bin_edges();
    let mut prev = model.cdf(edges[0]);
    for (i, &obs) in hist.bin_counts().iter().enumerate() {
        let next = model.cdf(edges[i + 1]);
        let e = (n * (next - prev)).max(1e-300);
        prev = next;
        let o = obs as f64;
        let d = if o > 0.0 { 2.0 * (e - o + o * libm::log(o / e)) } else { 2.0 * e };
        let r = libm::sqrt(d.max(0.0));
        out[i] = if o >= e { r } else { -r };
    }
}

/// Fits the mixture to a histogram by minimizing the Poisson deviance.
pub fn fit_bimodal(hist: &CountHistogram, init_guess: Option<&BimodalChargeModel>) -> Result<BimodalFit> {
    if (hist.total_shots() as usize) < MIN_SHOTS {
        return Err(Error::InsufficientSamples { needed: MIN_SHOTS, got: hist.total_shots() as usize });
    }
    let init = match init_guess {
        Some(m) => {
            m.validate()?;
            *m
        }
        None => initial_guess(hist)?,
    };
    let frame = Frame::from_model(&init);
    let theta0 = frame.encode(&init);
    let m = hist.n_bins();
    let res = levenberg_marquardt(
        |t, out| {
            let (model, _) = frame.decode(t);
            deviance_residuals(hist, &model, out);
        },
        &theta0,
        m,
        LsqOptions { max_iterations: 500, tolerance: 1e-12 },
    );
    let (model, swapped) = frame.decode(&res.x);
    if !res.converged {
        return Err(Error::FitFailure { iterations: res.iterations, best: res.x });
    }
    check_fitted(&model)?;
    let std_errors = res.inverse_normal.as_deref().and_then(|cov| frame.std_errors(&res.x, cov, swapped));
    let dof = m.saturating_sub(N_PARAMS).max(1) as f64;
    Ok(BimodalFit {
        model,
        std_errors,
        chi2_per_dof: res.sum_squares / dof,
        iterations: res.iterations,
        method: FitMethod::BinnedPoisson,
    })
}

/// Replaces zero shapes with method-of-moments values.
///
/// Zero shape with normal-MLE location and scale is a stationary point of the
/// skew-normal likelihood, so a gradient method started there stays there.
/// Samples are split at the midpoint between the initial mode locations and
/// each half's skewness is inverted for the shape.
fn moment_start(samples: &[f64], init: &BimodalChargeModel) -> BimodalChargeModel {
    let cut = 0.5 * (init.mode_nv0.location + init.mode_nvm.location);
    let fit_side = |keep: &dyn Fn(f64) -> bool, fallback: SkewNormalParams| {
        let (mut n, mut s1) = (0.0, 0.0);
        for &x in samples.iter().filter(|&&x| keep(x)) {
            n += 1.0;
            s1 += x;
        }
        if n < 30.0 {
            return fallback;
        }
        let mean = s1 / n;
        let (mut m2, mut m3) = (0.0, 0.0);
        for &x in samples.iter().filter(|&&x| keep(x)) {
            let d = x - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        let skew = (m3 / libm::pow(m2, 1.5)).clamp(-0.95, 0.95);
        let g23 = libm::pow(skew.abs(), 2.0 / 3.0);
        let c = libm::pow(0.5 * (4.0 - core::f64::consts::PI), 2.0 / 3.0);
        let delta = (libm::sqrt(core::f64::consts::FRAC_PI_2 * g23 / (g23 + c))).min(0.98).copysign(skew);
        let mut shape = delta / libm::sqrt(1.0 - delta * delta);
        if shape.abs() < 0.3 {
            shape = 0.3f64.copysign(if skew == 0.0 { 1.0 } else { skew });
        }
        let d = shape / libm::sqrt(1.0 + shape * shape);
        let scale = libm::sqrt(m2 / (1.0 - 2.0 * d * d / core::f64::consts::PI));
        let location = mean - scale * d * libm::sqrt(2.0 / core::f64::consts::PI);
        SkewNormalParams::new(location, scale, shape).unwrap_or(fallback)
    };
    let a = fit_side(&|x| x < cut, init.mode_nv0);
    let b = fit_side(&|x| x >= cut, init.mode_nvm);
    BimodalChargeModel::new(init.p_nv0, a, b).unwrap_or(*init)
}

/// `(ln Φ(x), φ(x)/Φ(x))` sharing one CDF evaluation.
#[inline]
fn ln_cdf_and_mills(x: f64) -> (f64, f64) {
    if x == 0.0 {
        (-core::f64::consts::LN_2, 0.797_884_560_802_865_4)
    } else if x > -30.0 {
        let c = norm_cdf(x);
        (libm::log(c), norm_pdf(x) / c)
    } else {
        (ln_norm_cdf(x), inv_mills(x))
    }
}

/// Mean negative log-likelihood of normalized samples and its gradient.
fn mean_nll(t: &[f64], u: &[f64], grad: &mut [f64]) -> f64 {
    let lp0 = ln_sigmoid(t[0]);
    let lp1 = ln_sigmoid(-t[0]);
    let p = sigmoid(t[0]);
    let (l0, s0, a0) = (t[1], libm::exp(t[2]), t[3]);
    let (l1, s1, a1) = (t[4], libm::exp(t[5]), t[6]);
    let (ls0, ls1) = (t[2], t[5]);
    const LN_2_OVER_SQRT_2PI: f64 = -0.225_791_352_644_727_4; // ln 2 - ln sqrt(2π)
    let mut nll = 0.0;
    let mut g = [0.0; N_PARAMS];
    for &x in u {
        let z0 = (x - l0) / s0;
        let z1 = (x - l1) / s1;
        let (lc0, m0) = ln_cdf_and_mills(a0 * z0);
        let (lc1, m1) = ln_cdf_and_mills(a1 * z1);
        let lg0 = LN_2_OVER_SQRT_2PI - ls0 - 0.5 * z0 * z0 + lc0;
        let lg1 = LN_2_OVER_SQRT_2PI - ls1 - 0.5 * z1 * z1 + lc1;
        let e0 = lp0 + lg0;
        let e1 = lp1 + lg1;
        let mx = e0.max(e1);
        let lf = mx + libm::log(libm::exp(e0 - mx) + libm::exp(e1 - mx));
        nll -= lf;
        let w0 = libm::exp(e0 - lf);
        let w1 = 1.0 - w0;
        g[0] -= w0 - p;
        g[1] -= w0 * (z0 - a0 * m0) / s0;
        g[2] -= w0 * (-1.0 + z0 * z0 - a0 * m0 * z0);
        g[3] -= w0 * m0 * z0;
        g[4] -= w1 * (z1 - a1 * m1) / s1;
        g[5] -= w1 * (-1.0 + z1 * z1 - a1 * m1 * z1);
        g[6] -= w1 * m1 * z1;
    }
    let inv_n = 1.0 / u.len() as f64;
    for (dst, src) in grad.iter_mut().zip(g) {
        *dst = src * inv_n;
    }
    nll * inv_n
}

/// Fits the mixture to raw samples by maximum likelihood.
///
/// Standard errors come from the inverse of the observed information,
/// obtained by differencing the analytic gradient.
pub fn fit_bimodal_samples(samples: &[f64], init_guess: Option<&BimodalChargeModel>) -> Result<BimodalFit> {
    if samples.len() < MIN_SHOTS {
        return Err(Error::InsufficientSamples { needed: MIN_SHOTS, got: samples.len() });
    }
    ensure_finite("samples", samples)?;
    let n_bins = (libm::sqrt(samples.len() as f64) as usize).clamp(50, 200);
    let hist = CountHistogram::from_samples(samples, n_bins)?;
    let init = match init_guess {
        Some(m) => {
            m.validate()?;
            *m
        }
        None => moment_start(samples, &initial_guess(&hist)?),
    };
    let frame = Frame::from_model(&init);
    let u: Vec<f64> = samples.iter().map(|&x| (x - frame.center) / frame.spread).collect();
    let theta0 = frame.encode(&init);
    let opts = BfgsOptions { max_iterations: 1000, gradient_tolerance: 1e-7, value_tolerance: 1e-15 };
    let min = bfgs(|t, g| mean_nll(t, &u, g), &theta0, opts);
    let (model, swapped) = frame.decode(&min.x);
    if !min.converged {
        return Err(Error::FitFailure { iterations: min.iterations, best: min.x });
    }
    check_fitted(&model)?;

    // observed information of the total log-likelihood
    let n = u.len() as f64;
    let mut hess = alloc::vec![0.0; N_PARAMS * N_PARAMS];
    let mut gp = [0.0; N_PARAMS];
    let mut gm = [0.0; N_PARAMS];
    let mut tp = min.x.clone();
    for j in 0..N_PARAMS {
        let h = 1e-5 * (1.0 + min.x[j].abs());
        tp[j] = min.x[j] + h;
        mean_nll(&tp, &u, &mut gp);
        tp[j] = min.x[j] - h;
        mean_nll(&tp, &u, &mut gm);
        tp[j] = min.x[j];
        for i in 0..N_PARAMS {
            hess[i * N_PARAMS + j] = n * (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..N_PARAMS {
        for j in 0..i {
            let avg = 0.5 * (hess[i * N_PARAMS + j] + hess[j * N_PARAMS + i]);
            hess[i * N_PARAMS + j] = avg;
            hess[j * N_PARAMS + i] = avg;
        }
    }
    let std_errors = invert(&hess, N_PARAMS).and_then(|cov| frame.std_errors(&min.x, &cov, swapped));
    let dof = hist.n_bins().saturating_sub(N_PARAMS).max(1) as f64;
    Ok(BimodalFit {
        model,
        std_errors,
        chi2_per_dof: deviance(&hist, &model) / dof,
        iterations: min.iterations,
        method: FitMethod::SampleLikelihood,
    })
}
