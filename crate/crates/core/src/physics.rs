//! Closed-form physics: microwave crosstalk, ESR and spin echo line shapes,
//! projection-noise correlation, and the SCC optical-crosstalk dip.
//!
//! All frequencies are in Hz (not rad/s) unless a field name says otherwise.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::optim::{levenberg_marquardt, LsqOptions};
use crate::special::faddeeva_re;

/// A microwave tone driving (possibly off-resonantly) one spin transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrowaveDrive {
    pub resonance_hz: f64,
    pub drive_hz: f64,
    pub rabi_hz: f64,
    /// Spin projection change of the transition, 1 or 2.
    pub delta_ms: u8,
}

impl MicrowaveDrive {
    pub fn new(resonance_hz: f64, drive_hz: f64, rabi_hz: f64, delta_ms: u8) -> Result<Self> {
        let d = Self { resonance_hz, drive_hz, rabi_hz, delta_ms };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("microwave drive", &[self.resonance_hz, self.drive_hz, self.rabi_hz])?;
        if self.resonance_hz <= 0.0 || self.drive_hz <= 0.0 || self.rabi_hz <= 0.0 {
            return Err(Error::invalid("drive frequencies must be positive"));
        }
        if !matches!(self.delta_ms, 1 | 2) {
            return Err(Error::invalid("delta_ms must be 1 or 2"));
        }
        Ok(())
    }

    pub fn detuning_hz(&self) -> f64 {
        self.drive_hz - self.resonance_hz
    }
}

/// Rabi oscillation amplitude `Ω² / ((ω₁ - ω₀)² + Ω²)`.
pub fn rabi_contrast(drive: &MicrowaveDrive) -> f64 {
    rabi_contrast_at(drive.detuning_hz(), drive.rabi_hz)
}

/// [`rabi_contrast`] from a detuning and Rabi frequency.
#[inline]
pub fn rabi_contrast_at(detuning_hz: f64, rabi_hz: f64) -> f64 {
    let r2 = rabi_hz * rabi_hz;
    r2 / (detuning_hz * detuning_hz + r2)
}

/// AC Zeeman (Bloch-Siegert type) shift of a spectator transition, in Hz:
/// `Δm_s Ω² ω₀ / (4 (ω₀² - ω₁²))`.
pub fn ac_zeeman_shift(drive: &MicrowaveDrive) -> Result<f64> {
    let w0 = drive.resonance_hz;
    let w1 = drive.drive_hz;
    let denom = w0 * w0 - w1 * w1;
    if denom == 0.0 {
        return Err(Error::SingularModel("AC Zeeman shift diverges on resonance".into()));
    }
    let om = drive.rabi_hz;
    Ok(0.25 * drive.delta_ms as f64 * om * om * w0 / denom)
}

/// Phase picked up by the spectator during one π pulse, `2π δ t_π` with
/// `t_π = 1/(2Ω)`.
pub fn phase_per_pi_pulse(drive: &MicrowaveDrive) -> Result<f64> {
    Ok(2.0 * PI * ac_zeeman_shift(drive)? / (2.0 * drive.rabi_hz))
}

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2 sqrt(2 ln 2)

/// Two identical Voigt lines at different centers.
///
/// Widths are full widths at half maximum of the Gaussian and Lorentzian
/// components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsrLineModel {
    pub center_low_hz: f64,
    pub center_high_hz: f64,
    pub gaussian_width_hz: f64,
    pub lorentzian_width_hz: f64,
    pub contrast: f64,
}

impl EsrLineModel {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "ESR line model",
            &[self.center_low_hz, self.center_high_hz, self.gaussian_width_hz, self.lorentzian_width_hz, self.contrast],
        )?;
        if self.gaussian_width_hz <= 0.0 || self.lorentzian_width_hz < 0.0 {
            return Err(Error::invalid("ESR widths must be positive"));
        }
        Ok(())
    }
}

/// Voigt profile scaled to 1 at zero detuning.
///
/// Uses `Re w(z)` of the Faddeeva function: with `σ` the Gaussian standard
/// deviation and `γ` the Lorentzian half width,
/// `V(x) ∝ Re w((x + iγ) / (σ√2))`.
pub fn voigt_normalized(detuning_hz: f64, gaussian_fwhm_hz: f64, lorentzian_fwhm_hz: f64) -> f64 {
    let sigma = gaussian_fwhm_hz / FWHM_PER_SIGMA;
    let gamma = 0.5 * lorentzian_fwhm_hz;
    let s = sigma * core::f64::consts::SQRT_2;
    faddeeva_re(detuning_hz / s, gamma / s) / faddeeva_re(0.0, gamma / s)
}

/// `contrast · (V(f - c_low) + V(f - c_high))`
pub fn esr_signal(freq_hz: f64, model: &EsrLineModel) -> f64 {
    let v = |c: f64| voigt_normalized(freq_hz - c, model.gaussian_width_hz, model.lorentzian_width_hz);
    model.contrast * (v(model.center_low_hz) + v(model.center_high_hz))
}

/// Empirical spin echo envelope with two revivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinEchoModel {
    pub baseline: f64,
    pub collapse_time_s: f64,
    pub revival_time_s: f64,
    pub revival_amps: [f64; 2],
    /// Empty, or two angular frequencies modulating the revivals.
    #[serde(default)]
    pub osc_freqs_rad_per_s: Vec<f64>,
}

impl SpinEchoModel {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("spin echo model", &[self.baseline, self.collapse_time_s, self.revival_time_s])?;
        ensure_finite("spin echo revival amplitudes", &self.revival_amps)?;
        ensure_finite("spin echo oscillation frequencies", &self.osc_freqs_rad_per_s)?;
        if self.collapse_time_s <= 0.0 || self.revival_time_s <= 0.0 {
            return Err(Error::invalid("spin echo times must be positive"));
        }
        if !matches!(self.osc_freqs_rad_per_s.len(), 0 | 2) {
            return Err(Error::invalid("spin echo takes zero or two oscillation frequencies"));
        }
        Ok(())
    }
}

/// Spin echo signal at total evolution time `t = 2τ`:
///
/// ```text
/// f(t) = b - b exp(-(t/t_c)²) - M(t) Σᵢ aᵢ exp(-((t - i t_r)/t_c)²)
/// ```
///
/// with `M = 1` without oscillations and `M = Σⱼ cos(ωⱼ t)` otherwise. Not
/// clamped.
pub fn spin_echo_signal(total_evolution_s: f64, model: &SpinEchoModel) -> f64 {
    let t = total_evolution_s;
    let tc = model.collapse_time_s;
    let g = |x: f64| libm::exp(-(x / tc) * (x / tc));
    let revivals: f64 = model
        .revival_amps
        .iter()
        .enumerate()
        .map(|(i, a)| a * g(t - (i + 1) as f64 * model.revival_time_s))
        .sum();
    let modulation = if model.osc_freqs_rad_per_s.is_empty() {
        1.0
    } else {
        model.osc_freqs_rad_per_s.iter().map(|w| libm::cos(w * t)).sum()
    };
    model.baseline - model.baseline * g(t) - modulation * revivals
}

/// Correlation left after Gaussian phase noise of variance `σ²`:
/// `r = (1 - exp(-2σ²)) / 2`.
pub fn qpn_correlation_gaussian(phase_variance_rad2: f64) -> Result<f64> {
    if !(phase_variance_rad2 >= 0.0) {
        return Err(Error::invalid("phase variance must be non-negative"));
    }
    Ok(-0.5 * libm::expm1(-2.0 * phase_variance_rad2))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// `⟨sin φ₁ sin φ₂⟩` over phase pairs drawn by `sampler`.
pub fn ideal_correlation_mc<R, F>(mut phase_sampler: F, n_samples: usize, rng: &mut R) -> Result<McEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> (f64, f64),
{
    if n_samples < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: n_samples });
    }
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let (a, b) = phase_sampler(rng);
        let v = libm::sin(a) * libm::sin(b);
        sum += v;
        sum2 += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_error: libm::sqrt(var / n), n_samples })
}

/// Gaussian dip in spin SNR caused by an extra SCC pulse on a neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstalkModel {
    /// 1/e² radius, µm.
    pub waist_um: f64,
    pub floor_snr: f64,
    pub dip_depth: f64,
}

impl CrosstalkModel {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("crosstalk model", &[self.waist_um, self.floor_snr, self.dip_depth])?;
        if self.waist_um <= 0.0 {
            return Err(Error::invalid("crosstalk waist must be positive"));
        }
        if self.dip_depth < 0.0 || self.dip_depth > self.floor_snr {
            return Err(Error::invalid("crosstalk dip depth must lie in [0, floor_snr]"));
        }
        Ok(())
    }
}

#[inline]
fn gaussian_dip(displacement_um: f64, waist_um: f64) -> f64 {
    let x = displacement_um / waist_um;
    libm::exp(-2.0 * x * x)
}

/// `floor - depth · exp(-2 (d/w)²)`
pub fn scc_crosstalk_snr(displacement_um: f64, model: &CrosstalkModel) -> f64 {
    model.floor_snr - model.dip_depth * gaussian_dip(displacement_um, model.waist_um)
}

/// Per-pulse probability that an SCC pulse aimed `displacement_um` away
/// re-polarizes a spin: `p_max · exp(-2 (d/w)²)`.
pub fn spin_repolarization_prob(displacement_um: f64, waist_um: f64, p_max: f64) -> f64 {
    p_max * gaussian_dip(displacement_um, waist_um)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkFit {
    pub model: CrosstalkModel,
    /// Standard errors of (waist, floor, depth), scaled by the residual variance.
    pub std_errors: [f64; 3],
}

/// Least-squares fit of [`scc_crosstalk_snr`] to measured points.
pub fn fit_crosstalk(displacements_um: &[f64], snr: &[f64], init: &CrosstalkModel) -> Result<CrosstalkFit> {
    if displacements_um.len() != snr.len() {
        return Err(Error::invalid("displacements and SNR values differ in length"));
    }
    if snr.len() < 4 {
        return Err(Error::InsufficientSamples { needed: 4, got: snr.len() });
    }
    ensure_finite("crosstalk data", displacements_um)?;
    ensure_finite("crosstalk data", snr)?;
    init.validate()?;
    let x0 = [libm::log(init.waist_um), init.floor_snr, init.dip_depth];
    let res = levenberg_marquardt(
        |p, out| {
            let w = libm::exp(p[0]);
            for ((o, &d), &y) in out.iter_mut().zip(displacements_um).zip(snr) {
                *o = p[1] - p[2] * gaussian_dip(d, w) - y;
            }
        },
        &x0,
        snr.len(),
        LsqOptions::default(),
    );
    if !res.converged {
        return Err(Error::FitFailure { iterations: res.iterations, best: res.x });
    }
    let waist = libm::exp(res.x[0]);
    let dof = (snr.len() - 3).max(1) as f64;
    let s2 = res.sum_squares / dof;
    let std_errors = match res.inverse_normal {
        Some(c) => [waist * libm::sqrt(c[0] * s2), libm::sqrt(c[4] * s2), libm::sqrt(c[8] * s2)],
        None => [f64::NAN; 3],
    };
    Ok(CrosstalkFit { model: CrosstalkModel { waist_um: waist, floor_snr: res.x[1], dip_depth: res.x[2] }, std_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, tags};
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn drive(res: f64, drv: f64, rabi: f64) -> MicrowaveDrive {
        MicrowaveDrive::new(res, drv, rabi, 1).unwrap()
    }

    #[test]
    fn rabi_contrast_limits() {
        assert_eq!(rabi_contrast(&drive(2.87e9, 2.87e9, 8e6)), 1.0);
        assert!((rabi_contrast(&drive(2.87e9, 2.87e9 + 8e6, 8e6)) - 0.5).abs() < 1e-15);
        let a = rabi_contrast(&drive(2.858e9, 2.813e9, 8e6));
        assert!((a - 0.030_637).abs() < 1e-6, "{a}");
    }

    #[test]
    fn zeeman_phase_per_pi_pulse() {
        let d = drive(2.858e9, 2.813e9, 8e6);
        let shift = ac_zeeman_shift(&d).unwrap();
        assert!((shift - 179_188.0).abs() < 1.0, "{shift}");
        let phase = phase_per_pi_pulse(&d).unwrap();
        assert!((phase - 0.070_367).abs() < 1e-5, "{phase}");
        assert!(ac_zeeman_shift(&drive(2.87e9, 2.87e9, 8e6)).is_err());
        assert!(ac_zeeman_shift(&drive(2.858e9, 2.813e9, 1e-3)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zeeman_swap_flips_sign() {
        let a = ac_zeeman_shift(&drive(2.858e9, 2.813e9, 8e6)).unwrap();
        let b = ac_zeeman_shift(&drive(2.813e9, 2.858e9, 8e6)).unwrap();
        assert!(a > 0.0 && b < 0.0);
        assert!((b / a + 2.813 / 2.858).abs() < 1e-12);
    }

    #[test]
    fn double_quantum_doubles_shift() {
        let one = ac_zeeman_shift(&drive(2.858e9, 2.813e9, 8e6)).unwrap();
        let two = ac_zeeman_shift(&MicrowaveDrive::new(2.858e9, 2.813e9, 8e6, 2).unwrap()).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-9);
        assert!(MicrowaveDrive::new(2.858e9, 2.813e9, 8e6, 3).is_err());
    }

    fn esr(low: f64, high: f64, g: f64, l: f64) -> EsrLineModel {
        EsrLineModel { center_low_hz: low, center_high_hz: high, gaussian_width_hz: g, lorentzian_width_hz: l, contrast: 0.2 }
    }

    #[test]
    fn esr_peaks_hit_contrast() {
        let m = esr(2.80e9, 2.95e9, 2e6, 1e6);
        for c in [m.center_low_hz, m.center_high_hz] {
            assert!((esr_signal(c, &m) - m.contrast).abs() < 1e-4 * m.contrast);
        }
    }

    #[test]
    fn zero_lorentzian_width_is_gaussian() {
        let (fwhm, sigma) = (3e6, 3e6 / FWHM_PER_SIGMA);
        for k in -40..=40 {
            let x = k as f64 * 0.25e6;
            let g = libm::exp(-0.5 * (x / sigma) * (x / sigma));
            assert!((voigt_normalized(x, fwhm, 0.0) - g).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn voigt_matches_numerical_convolution() {
        for &(gw, lw) in &[(2e6, 1e6), (1e6, 3e6), (4e6, 0.5e6)] {
            let sigma = gw / FWHM_PER_SIGMA;
            let gamma = 0.5 * lw;
            let conv = |x: f64| {
                // trapezoid over the Gaussian support, 1e5 points
                let n = 100_000;
                let half = 14.0 * sigma;
                let h = 2.0 * half / n as f64;
                let mut s = 0.0;
                for i in 0..=n {
                    let t = -half + h * i as f64;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    let g = libm::exp(-0.5 * (t / sigma) * (t / sigma));
                    s += w * g * gamma / ((x - t) * (x - t) + gamma * gamma);
                }
                s * h
            };
            let c0 = conv(0.0);
            for &x in &[0.3e6, 1.0e6, 2.5e6, 6.0e6, 15e6] {
                let want = conv(x) / c0;
                let got = voigt_normalized(x, gw, lw);
                assert!(((got - want) / want).abs() < 1e-5, "gw={gw} lw={lw} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn esr_symmetric_in_centers() {
        let a = esr(2.80e9, 2.95e9, 2e6, 1e6);
        let b = esr(2.95e9, 2.80e9, 2e6, 1e6);
        for k in 0..100 {
            let f = 2.75e9 + k as f64 * 2.5e6;
            assert_eq!(esr_signal(f, &a), esr_signal(f, &b));
        }
    }

    fn echo(amps: [f64; 2], osc: Vec<f64>) -> SpinEchoModel {
        SpinEchoModel {
            baseline: 0.5,
            collapse_time_s: 10e-6,
            revival_time_s: 75e-6,
            revival_amps: amps,
            osc_freqs_rad_per_s: osc,
        }
    }

    #[test]
    fn spin_echo_reference_values() {
        let flat = echo([0.0, 0.0], Vec::new());
        assert_eq!(spin_echo_signal(0.0, &flat), 0.0);
        assert!((spin_echo_signal(1e-3, &flat) - 0.5).abs() < 1e-12);
        let m = echo([0.4, 0.3], Vec::new());
        let tail = libm::exp(-56.25);
        let want = 0.5 - 0.5 * tail - 0.4 - 0.3 * tail;
        assert!((spin_echo_signal(75e-6, &m) - want).abs() < 1e-15);
        assert!((want - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_frequency_oscillation_doubles_revivals() {
        let plain = echo([0.4, 0.3], Vec::new());
        let osc = echo([0.4, 0.3], alloc::vec![0.0, 0.0]);
        for &t in &[75e-6, 150e-6] {
            let b = 0.5 - 0.5 * libm::exp(-(t / 10e-6) * (t / 10e-6));
            let rev_plain = b - spin_echo_signal(t, &plain);
            let rev_osc = b - spin_echo_signal(t, &osc);
            assert!((rev_osc - 2.0 * rev_plain).abs() < 1e-15);
        }
        assert!(echo([0.4, 0.3], alloc::vec![1.0]).validate().is_err());
    }

    #[test]
    fn qpn_limits() {
        assert_eq!(qpn_correlation_gaussian(0.0).unwrap(), 0.0);
        assert!((qpn_correlation_gaussian(50.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(qpn_correlation_gaussian(-0.1).is_err());
    }

    #[test]
    fn qpn_formula_matches_monte_carlo() {
        for (k, &var) in [0.1, 0.5, 1.0, 3.0].iter().enumerate() {
            let mut rng = stream_rng(77, tags::QPN, k as u64);
            let normal = Normal::new(0.0, libm::sqrt(var)).unwrap();
            let est = ideal_correlation_mc(
                |r| {
                    let p = normal.sample(r);
                    (p, p)
                },
                1_000_000,
                &mut rng,
            )
            .unwrap();
            let want = qpn_correlation_gaussian(var).unwrap();
            assert!((est.mean - want).abs() < 3.0 * est.std_error, "var={var}: {} vs {want}", est.mean);
        }
    }

    #[test]
    fn ideal_binary_phases_give_unit_correlation() {
        let mut rng = stream_rng(5, tags::QPN, 9);
        let half_pi = core::f64::consts::FRAC_PI_2;
        let pick = |r: &mut crate::rng::SimRng| if r.random::<bool>() { half_pi } else { -half_pi };
        let same = ideal_correlation_mc(|r| { let p = pick(r); (p, p) }, 10_000, &mut rng).unwrap();
        let flip = ideal_correlation_mc(|r| { let p = pick(r); (p, -p) }, 10_000, &mut rng).unwrap();
        assert!((same.mean - 1.0).abs() < 1e-12);
        assert!((flip.mean + 1.0).abs() < 1e-12);
        let n = 100_000;
        let indep = ideal_correlation_mc(|r| (r.random_range(-PI..PI), r.random_range(-PI..PI)), n, &mut rng).unwrap();
        assert!(indep.mean.abs() < 3.0 / libm::sqrt(n as f64));
        assert!(ideal_correlation_mc(|r| (r.random::<f64>(), 0.0), 99, &mut rng).is_err());
    }

    #[test]
    fn crosstalk_dip_shape() {
        let m = CrosstalkModel { waist_um: 1.4, floor_snr: 1.0, dip_depth: 0.6 };
        assert!((scc_crosstalk_snr(1e3, &m) - 1.0).abs() < 1e-15);
        let att = (m.floor_snr - scc_crosstalk_snr(1.4, &m)) / m.dip_depth;
        assert!((att - libm::exp(-2.0)).abs() < 1e-15);
        assert!((spin_repolarization_prob(0.0, 1.4, 0.7) - 0.7).abs() < 1e-15);
        assert!(CrosstalkModel { waist_um: 1.4, floor_snr: 0.5, dip_depth: 0.6 }.validate().is_err());
    }

    #[test]
    fn crosstalk_fit_recovers_waist() {
        let truth = CrosstalkModel { waist_um: 1.4, floor_snr: 1.0, dip_depth: 0.7 };
        let mut rng = stream_rng(31, tags::SAMPLING, 0);
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.125).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scc_crosstalk_snr(x, &truth) + 0.05 * truth.floor_snr * z
            })
            .collect();
        let init = CrosstalkModel { waist_um: 2.5, floor_snr: 0.9, dip_depth: 0.4 };
        let fit = fit_crosstalk(&xs, &ys, &init).unwrap();
        assert!((fit.model.waist_um - 1.4).abs() < 0.1, "{:?}", fit);
    }

    proptest! {
        #[test]
        fn rabi_contrast_bounded_and_symmetric(det in -1e9f64..1e9, rabi in 1e3f64..1e8) {
            let a = rabi_contrast_at(det, rabi);
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert_eq!(a, rabi_contrast_at(-det, rabi));
            prop_assert!(a <= rabi_contrast_at(0.0, rabi));
        }

        #[test]
        fn pi_pulse_phase_scales_linearly_in_rabi(rabi in 1e5f64..2e7) {
            let one = phase_per_pi_pulse(&drive(2.858e9, 2.813e9, rabi)).unwrap();
            let two = phase_per_pi_pulse(&drive(2.858e9, 2.813e9, 2.0 * rabi)).unwrap();
            prop_assert!((two - 2.0 * one).abs() <= 1e-12 * two.abs());
        }

        #[test]
        fn qpn_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(qpn_correlation_gaussian(lo).unwrap() <= qpn_correlation_gaussian(hi).unwrap());
        }
    }
}
