use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::special::{ln_norm_cdf, norm_cdf, norm_pdf, owens_t};

/// Skew-normal distribution `SN(location, scale, shape)`.
///
/// Density `2/scale · φ(z) Φ(shape·z)` with `z = (x - location)/scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewNormalParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl SkewNormalParams {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self> {
        let p = Self { location, scale, shape };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("skew normal parameters", &[self.location, self.scale, self.shape])?;
        if self.scale <= 0.0 {
            return Err(Error::invalid("skew normal scale must be positive"));
        }
        Ok(())
    }

    /// `shape / sqrt(1 + shape²)`
    #[inline]
    pub fn delta(&self) -> f64 {
        self.shape / libm::sqrt(1.0 + self.shape * self.shape)
    }

    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        2.0 * norm_pdf(z) * norm_cdf(self.shape * z) / self.scale
    }

    /// Log density, stable in both tails.
    #[inline]
    pub fn ln_density(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        core::f64::consts::LN_2 - libm::log(self.scale) - 0.5 * z * z
            - 0.918_938_533_204_672_8 // ln sqrt(2π)
            + ln_norm_cdf(self.shape * z)
    }

    /// CDF via Owen's T: `Φ(z) - 2 T(z, shape)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        (norm_cdf(z) - 2.0 * owens_t(z, self.shape)).clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.location + self.scale * self.delta() * libm::sqrt(2.0 / core::f64::consts::PI)
    }

    pub fn variance(&self) -> f64 {
        let d = self.delta();
        self.scale * self.scale * (1.0 - 2.0 * d * d / core::f64::consts::PI)
    }

    /// Exact draw via `loc + scale (δ|Z₁| + sqrt(1-δ²) Z₂)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let d = self.delta();
        self.location + self.scale * (d * libm::fabs(z1) + libm::sqrt(1.0 - d * d) * z2)
    }
}

/// Skew-normal density at `x`.
pub fn skew_normal_pdf(x: f64, params: &SkewNormalParams) -> Result<f64> {
    ensure_finite("x", &[x])?;
    params.validate()?;
    Ok(params.density(x))
}

/// Skew-normal CDF at `x`.
pub fn skew_normal_cdf(x: f64, params: &SkewNormalParams) -> Result<f64> {
    ensure_finite("x", &[x])?;
    params.validate()?;
    Ok(params.cdf(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, tags};
    use crate::special::gauss_legendre;
    use alloc::vec::Vec;

    fn sn(loc: f64, scale: f64, shape: f64) -> SkewNormalParams {
        SkewNormalParams::new(loc, scale, shape).unwrap()
    }

    #[test]
    fn reduces_to_standard_normal_at_zero_shape() {
        let v = skew_normal_pdf(0.0, &sn(0.0, 1.0, 0.0)).unwrap();
        assert!((v - 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn value_at_location_is_independent_of_shape() {
        for &shape in &[-5.0, -1.0, 0.0, 0.7, 3.0] {
            for &scale in &[0.5, 2.0, 11.0] {
                let v = skew_normal_pdf(17.0, &sn(17.0, scale, shape)).unwrap();
                assert!((v - 0.398_942_280_401_432_7 / scale).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(SkewNormalParams::new(0.0, 0.0, 1.0).is_err());
        assert!(SkewNormalParams::new(0.0, -1.0, 1.0).is_err());
        assert!(SkewNormalParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(skew_normal_pdf(f64::INFINITY, &sn(0.0, 1.0, 0.0)).is_err());
    }

    // Adaptive Simpson quadrature oracle, independent of the Gauss-Legendre
    // rule used inside the CDF.
    fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    #[test]
    fn density_normalized_on_wide_window() {
        for p in [sn(0.0, 1.0, 0.0), sn(40.0, 8.0, 2.0), sn(110.0, 12.0, -1.0), sn(3.0, 0.5, 9.0)] {
            let half = 12.0 * p.scale * (1.0 + p.shape.abs());
            let total = adaptive_simpson(|x| p.density(x), p.location - half, p.location + half, 1e-13);
            assert!((total - 1.0).abs() < 1e-9, "{p:?}: {total}");
        }
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let p = sn(40.0, 8.0, 2.0);
        for &x in &[20.0, 35.0, 40.0, 52.0, 80.0] {
            let lo = p.location - 200.0;
            let oracle = gauss_legendre(|t| p.density(t), lo, x, 400);
            assert!((p.cdf(x) - oracle).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn sample_mean_matches_location_at_zero_shape() {
        let p = sn(25.0, 3.0, 0.0);
        let mut rng = stream_rng(11, tags::SAMPLING, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 25.0).abs() < 4.0 * 3.0 / libm::sqrt(n as f64));
    }

    #[test]
    fn vanishing_scale_collapses_samples() {
        let p = sn(12.5, 1e-12, 0.0);
        let mut rng = stream_rng(1, tags::SAMPLING, 1);
        for _ in 0..1000 {
            assert!((p.sample(&mut rng) - 12.5).abs() < 1e-9);
        }
    }

    #[test]
    fn ks_statistic_against_analytic_cdf() {
        for (k, p) in [sn(40.0, 8.0, 2.0), sn(110.0, 12.0, -1.0), sn(0.0, 1.0, 6.0)].into_iter().enumerate() {
            let mut rng = stream_rng(2024, tags::SAMPLING, k as u64);
            let n = 100_000;
            let mut xs: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let mut d: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let f = p.cdf(x);
                d = d.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
            }
            assert!(d < 0.006, "KS statistic {d} for {p:?}");
        }
    }
}
