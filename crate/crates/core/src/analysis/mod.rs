//! Camera-frame reduction, charge thresholding, spin normalization,
//! correlation matrices and the conditional-initialization model.

mod conditional;
mod correlation;

pub use conditional::{
    actual_from_measured, coeffs_from_rates, fit_conditional_model, rates_from_coeffs, ConditionalFit,
    ConditionalInitModel,
};
pub use correlation::{correlation_from_bits, correlation_from_counts, CorrelationAccumulator, CorrelationMatrix};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::simulator::{CameraModel, Frame, NvCenter, ShotRecord};

/// Camera offset estimated from the masked strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub baseline_adu: f64,
    /// Robust spread of the masked pixels.
    pub noise_adu: f64,
    /// The masked strip looks brighter than the darkest part of the frame,
    /// e.g. from stray light.
    pub contaminated: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check_frame(frame: &Frame, camera: &CameraModel) -> Result<()> {
    camera.validate()?;
    if frame.width != camera.width_px || frame.height != camera.height_px || frame.pixels.len() != frame.width * frame.height
    {
        return Err(Error::invalid("frame size does not match the camera ROI"));
    }
    if camera.mask_width_px == 0 {
        return Err(Error::config("camera has no masked strip"));
    }
    ensure_finite("frame", &frame.pixels)
}

/// Median of the masked strip.
pub fn estimate_baseline(frame: &Frame, camera: &CameraModel) -> Result<BaselineEstimate> {
    check_frame(frame, camera)?;
    let mut mask: Vec<f64> = (0..frame.height)
        .flat_map(|y| (0..camera.mask_width_px).map(move |x| (x, y)))
        .map(|(x, y)| frame.get(x, y))
        .collect();
    let mean = mask.iter().sum::<f64>() / mask.len() as f64;
    let med = median(&mut mask);
    let mut dev: Vec<f64> = mask.iter().map(|v| (v - med).abs()).collect();
    let sigma = 1.4826 * median(&mut dev);

    let mut all = frame.pixels.clone();
    let k = all.len() / 10;
    let (_, p10, _) = all.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    let contaminated = mean - *p10 > 5.0 * sigma + 1e-9 * med.abs().max(1.0);
    Ok(BaselineEstimate { baseline_adu: med, noise_adu: sigma, contaminated })
}

/// Photons in the integration disk of each NV, after removing `baseline_adu`.
pub fn integrate_counts(frame: &Frame, nvs: &[NvCenter], camera: &CameraModel, baseline_adu: f64) -> Result<Vec<f64>> {
    check_frame(frame, camera)?;
    ensure_finite("baseline", &[baseline_adu])?;
    camera.check_geometry(nvs)?;
    Ok(nvs
        .iter()
        .map(|nv| {
            let c = camera.to_px(nv.position_um);
            camera.disk_pixels(c).map(|(x, y)| frame.get(x, y) - baseline_adu).sum::<f64>() / camera.adu_per_photon
        })
        .collect())
}

/// Number of pixels in each NV's integration disk.
pub fn disk_sizes(nvs: &[NvCenter], camera: &CameraModel) -> Vec<usize> {
    nvs.iter().map(|nv| camera.disk_pixels(camera.to_px(nv.position_um)).count()).collect()
}

/// Re-thresholds recorded counts; a bit is set when `counts > threshold`.
pub fn threshold_records(records: &[ShotRecord], thresholds: &[f64]) -> Result<Vec<Vec<bool>>> {
    ensure_finite("thresholds", thresholds)?;
    records
        .iter()
        .map(|r| {
            if r.nvs.len() != thresholds.len() {
                return Err(Error::invalid("one threshold per NV"));
            }
            Ok(r.nvs.iter().zip(thresholds).map(|(o, &t)| o.counts > t).collect())
        })
        .collect()
}

/// Fraction of spins flipped out of m_s = 0: `(ref0 - s) / (ref0 - ref1)`
/// per NV, from the signal and the two reference measurements.
pub fn normalize_spin_signal(signal: &[f64], ref_ms0: &[f64], ref_ms1: &[f64]) -> Result<Vec<f64>> {
    if signal.len() != ref_ms0.len() || signal.len() != ref_ms1.len() {
        return Err(Error::invalid("signal and references differ in length"));
    }
    ensure_finite("spin signal", signal)?;
    ensure_finite("spin references", ref_ms0)?;
    ensure_finite("spin references", ref_ms1)?;
    signal
        .iter()
        .zip(ref_ms0.iter().zip(ref_ms1))
        .enumerate()
        .map(|(i, (&s, (&r0, &r1)))| {
            let d = r0 - r1;
            if d.abs() <= 1e-12 * (r0.abs() + r1.abs()).max(1e-300) {
                Err(Error::ZeroContrast(i))
            } else {
                Ok((r0 - s) / d)
            }
        })
        .collect()
}
