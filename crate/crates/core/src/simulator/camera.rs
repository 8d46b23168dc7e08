use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{NvCenter, ShotRecord};
use crate::error::{ensure_finite, Error, Result};

/// EMCCD region of interest. Pixel `(x, y)` is centered at integer
/// coordinates; columns `0..mask_width_px` are masked and see no light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub width_px: usize,
    pub height_px: usize,
    pub mask_width_px: usize,
    /// Pixel coordinate of the sample origin.
    pub origin_px: [f64; 2],
    pub um_per_px: f64,
    pub psf_sigma_px: f64,
    pub adu_per_photon: f64,
    pub read_noise_adu: f64,
    pub integration_radius_px: f64,
    pub dead_time_ms: f64,
    /// Skip photon shot noise and read noise.
    #[serde(default)]
    pub noiseless: bool,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width_px: 512,
            height_px: 200,
            mask_width_px: 64,
            origin_px: [84.0, 20.0],
            um_per_px: 0.1,
            psf_sigma_px: 2.5,
            adu_per_photon: 2.0,
            read_noise_adu: 3.0,
            integration_radius_px: 12.0,
            dead_time_ms: 12.0,
            noiseless: false,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "camera",
            &[
                self.origin_px[0],
                self.origin_px[1],
                self.um_per_px,
                self.psf_sigma_px,
                self.adu_per_photon,
                self.read_noise_adu,
                self.integration_radius_px,
                self.dead_time_ms,
            ],
        )?;
        if self.width_px == 0 || self.height_px == 0 || self.mask_width_px >= self.width_px {
            return Err(Error::config("camera ROI must be non-empty and wider than the mask"));
        }
        if self.um_per_px <= 0.0 || self.psf_sigma_px <= 0.0 || self.adu_per_photon <= 0.0 {
            return Err(Error::config("pixel size, PSF width and gain must be positive"));
        }
        if self.read_noise_adu < 0.0 || self.integration_radius_px <= 0.0 || self.dead_time_ms < 0.0 {
            return Err(Error::config("read noise, integration radius and dead time must be non-negative"));
        }
        Ok(())
    }

    pub fn to_px(&self, position_um: [f64; 2]) -> [f64; 2] {
        [
            self.origin_px[0] + position_um[0] / self.um_per_px,
            self.origin_px[1] + position_um[1] / self.um_per_px,
        ]
    }

    /// Fails unless the integration disk of every NV lies on unmasked pixels.
    pub fn check_geometry(&self, nvs: &[NvCenter]) -> Result<()> {
        let r = self.integration_radius_px;
        for nv in nvs {
            let [x, y] = self.to_px(nv.position_um);
            if x - r < self.mask_width_px as f64
                || x + r > (self.width_px - 1) as f64
                || y - r < 0.0
                || y + r > (self.height_px - 1) as f64
            {
                return Err(Error::Geometry(alloc::format!(
                    "NV {} at pixel ({x:.1}, {y:.1}) does not fit in the unmasked ROI",
                    nv.id
                )));
            }
        }
        Ok(())
    }

    /// Pixels `(x, y)` whose centers lie inside the integration disk around `center`.
    pub fn disk_pixels(&self, center: [f64; 2]) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.integration_radius_px;
        let x0 = libm::ceil(center[0] - r).max(0.0) as usize;
        let x1 = (libm::floor(center[0] + r) as usize).min(self.width_px - 1);
        let y0 = libm::ceil(center[1] - r).max(0.0) as usize;
        let y1 = (libm::floor(center[1] + r) as usize).min(self.height_px - 1);
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y))).filter(move |&(x, y)| {
            let dx = x as f64 - center[0];
            let dy = y as f64 - center[1];
            dx * dx + dy * dy <= r * r
        })
    }
}

/// One camera frame in ADU, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Fraction of a unit Gaussian PSF centered at `c` landing in the pixel
/// spanning `[p - 1/2, p + 1/2]`.
fn pixel_fraction(p: usize, c: f64, sigma: f64) -> f64 {
    let k = 1.0 / (sigma * core::f64::consts::SQRT_2);
    let lo = (p as f64 - 0.5 - c) * k;
    let hi = (p as f64 + 0.5 - c) * k;
    0.5 * (libm::erf(hi) - libm::erf(lo))
}

/// Renders the frame of one shot, using each NV's integrated counts as its
/// mean photon number.
pub fn render_frame<R: Rng + ?Sized>(
    shot: &ShotRecord,
    nvs: &[NvCenter],
    camera: &CameraModel,
    baseline_adu: f64,
    rng: &mut R,
) -> Result<Frame> {
    if shot.nvs.len() != nvs.len() {
        return Err(Error::invalid("shot and NV list have different lengths"));
    }
    let photons: Vec<f64> = shot.nvs.iter().map(|o| o.counts).collect();
    render_photons(&photons, nvs, camera, baseline_adu, rng)
}

/// Renders mean photon numbers `photons[i]` at the positions of `nvs`.
/// Negative photon numbers render as zero.
pub fn render_photons<R: Rng + ?Sized>(
    photons: &[f64],
    nvs: &[NvCenter],
    camera: &CameraModel,
    baseline_adu: f64,
    rng: &mut R,
) -> Result<Frame> {
    camera.validate()?;
    ensure_finite("photons", photons)?;
    ensure_finite("baseline", &[baseline_adu])?;
    if photons.len() != nvs.len() {
        return Err(Error::invalid("one photon number per NV"));
    }
    camera.check_geometry(nvs)?;
    let (w, h) = (camera.width_px, camera.height_px);
    let mut mean = alloc::vec![0.0; w * h];
    let sigma = camera.psf_sigma_px;
    let reach = 8.0 * sigma;
    for (nv, &n) in nvs.iter().zip(photons) {
        let n = n.max(0.0);
        let [cx, cy] = camera.to_px(nv.position_um);
        let x0 = (libm::floor(cx - reach).max(camera.mask_width_px as f64)) as usize;
        let x1 = (libm::ceil(cx + reach) as usize).min(w - 1);
        let y0 = libm::floor(cy - reach).max(0.0) as usize;
        let y1 = (libm::ceil(cy + reach) as usize).min(h - 1);
        let fy: Vec<f64> = (y0..=y1).map(|y| pixel_fraction(y, cy, sigma)).collect();
        for x in x0..=x1 {
            let fx = pixel_fraction(x, cx, sigma);
            for (k, y) in (y0..=y1).enumerate() {
                mean[y * w + x] += n * fx * fy[k];
            }
        }
    }
    let gain = camera.adu_per_photon;
    let pixels = if camera.noiseless {
        mean.iter().map(|&m| baseline_adu + gain * m).collect()
    } else {
        let read = Normal::new(0.0, camera.read_noise_adu).map_err(|e| Error::invalid(alloc::format!("{e}")))?;
        mean.iter()
            .map(|&m| {
                let k = if m > 0.0 { Poisson::new(m).map(|p| p.sample(rng)).unwrap_or(0.0) } else { 0.0 };
                baseline_adu + gain * k + read.sample(rng)
            })
            .collect()
    };
    Ok(Frame { width: w, height: h, pixels })
}

/// Slow reflected random walk of the camera offset between frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineWalk {
    pub value_adu: f64,
    pub step_adu: f64,
    pub min_adu: f64,
    pub max_adu: f64,
}

impl BaselineWalk {
    /// Advances one frame and returns the new baseline.
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let mut v = self.value_adu + self.step_adu * z;
        let span = self.max_adu - self.min_adu;
        if span > 0.0 {
            while v < self.min_adu || v > self.max_adu {
                v = if v < self.min_adu { 2.0 * self.min_adu - v } else { 2.0 * self.max_adu - v };
            }
        } else {
            v = self.min_adu;
        }
        self.value_adu = v;
        v
    }
}
