//! Special functions: standard normal density/CDF, Owen's T, the Faddeeva
//! function, and fixed-order Gauss-Legendre quadrature.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

/// 1/sqrt(2π)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        libm::log(norm_cdf(x))
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - libm::log(-x) - 0.5 * libm::log(2.0 * PI) + libm::log(series)
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`.
pub fn inv_mills(x: f64) -> f64 {
    if x > -30.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -x / series
    }
}

// Non-negative half of the 24-point Gauss-Legendre rule on [-1, 1].
const GL24: [(f64, f64); 12] = [
    (6.405_689_286_260_563e-2, 1.279_381_953_467_522_2e-1),
    (1.911_188_674_736_163_1e-1, 1.258_374_563_468_283e-1),
    (3.150_426_796_961_634e-1, 1.216_704_729_278_034_2e-1),
    (4.337_935_076_260_451_3e-1, 1.155_056_680_537_256_1e-1),
    (5.454_214_713_888_396e-1, 1.074_442_701_159_656_1e-1),
    (6.480_936_519_369_755e-1, 9.761_865_210_411_406e-2),
    (7.401_241_915_785_544e-1, 8.619_016_153_195_329e-2),
    (8.200_019_859_739_029e-1, 7.334_648_141_108_041e-2),
    (8.864_155_270_044_01e-1, 5.929_858_491_543_674e-2),
    (9.382_745_520_027_328e-1, 4.427_743_881_741_955e-2),
    (9.747_285_559_713_095e-1, 2.853_138_862_893_374_3e-2),
    (9.951_872_199_970_213e-1, 1.234_122_979_998_709_1e-2),
];

/// Integrates `f` over `[a, b]` with `panels` equal sub-intervals of the
/// 24-point Gauss-Legendre rule.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for &(x, w) in GL24.iter() {
            s += w * (f(mid + half * x) + f(mid - half * x));
        }
        total += s * half;
    }
    total
}

/// Owen's T function `T(h, a) = (1/2π) ∫₀^a exp(-h²(1+x²)/2) / (1+x²) dx`.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a < 0.0 {
        return -owens_t(h, -a);
    }
    let h = libm::fabs(h);
    if a <= 1.0 {
        owens_t_direct(h, a)
    } else {
        let ah = a * h;
        let ph = norm_cdf(h);
        let pah = norm_cdf(ah);
        0.5 * ph + 0.5 * pah - ph * pah - owens_t_direct(ah, 1.0 / a)
    }
}

fn owens_t_direct(h: f64, a: f64) -> f64 {
    let hh = -0.5 * h * h;
    if hh < -745.0 {
        return 0.0;
    }
    let integrand = |x: f64| {
        let q = 1.0 + x * x;
        libm::exp(hh * q) / q
    };
    // a sharp Gaussian factor exp(-h²x²/2) needs more panels
    let panels = if h * a > 8.0 { 4 } else { 2 };
    gauss_legendre(integrand, 0.0, a, panels) / (2.0 * PI)
}

// Weideman (1994) rational expansion of the Faddeeva function, N = 32.
const WEIDEMAN_L: f64 = 4.756_828_460_010_884;
const WEIDEMAN_COEFFS: [f64; 32] = [
    2.572_253_408_124_569_6,
    2.263_537_299_900_267_6,
    1.825_669_629_632_481_5,
    1.345_544_169_234_544_9,
    9.019_254_893_647_999e-1,
    5.460_139_720_639_341e-1,
    2.954_445_107_150_873e-1,
    1.406_071_622_689_376_9e-1,
    5.730_440_352_983_722e-2,
    1.900_615_578_484_540_8e-2,
    4.519_541_105_349_217e-3,
    3.925_913_607_007_031e-4,
    -2.453_298_027_002_143e-4,
    -1.307_544_925_461_534_6e-4,
    -2.140_961_920_171_075e-5,
    6.821_031_944_001_985e-6,
    4.401_531_731_578_55e-6,
    4.255_833_137_575_008_5e-7,
    -4.184_076_370_216_977_6e-7,
    -1.481_307_891_512_097_7e-7,
    2.293_043_906_509_996_6e-8,
    2.379_755_677_989_741_7e-8,
    8.124_889_456_846_652e-10,
    -3.208_015_091_723_368_7e-9,
    -5.231_020_481_196_329e-10,
    4.153_743_091_833_453e-10,
    1.165_825_109_352_377_4e-10,
    -5.544_235_948_166_462e-11,
    -2.154_363_207_783_876_9e-11,
    8.030_367_899_963_889e-12,
    3.740_881_293_165_362_5e-12,
    -1.303_179_786_305_008_8e-12,
];

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)` for `Im z >= 0`.
///
/// Relative accuracy is better than 1e-12 on the upper half plane.
pub fn faddeeva(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let l = Complex64::new(WEIDEMAN_L, 0.0);
    let denom = l - i * z;
    let zz = (l + i * z) / denom;
    let mut p = Complex64::new(0.0, 0.0);
    for &c in WEIDEMAN_COEFFS.iter().rev() {
        p = p * zz + c;
    }
    p * 2.0 / (denom * denom) + Complex64::new(1.0 / libm::sqrt(PI), 0.0) / denom
}

/// Real part of the Faddeeva function at `x + iy`, `y >= 0`.
pub fn faddeeva_re(x: f64, y: f64) -> f64 {
    faddeeva(Complex64::new(x, y)).re
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let x = a + h * k as f64;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-14);
        assert!((norm_pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn ln_norm_cdf_continuous_at_switch() {
        let left = ln_norm_cdf(-30.0 - 1e-9);
        let right = ln_norm_cdf(-30.0 + 1e-9);
        assert!((left - right).abs() < 1e-6 * right.abs());
        assert!((inv_mills(-30.0 - 1e-9) - inv_mills(-30.0 + 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn owens_t_matches_direct_quadrature() {
        for &h in &[0.0, 0.3, 1.0, 2.5, 5.0] {
            for &a in &[0.1, 0.5, 1.0, 2.0, 7.0, 30.0] {
                let oracle = simpson(
                    |x| libm::exp(-0.5 * h * h * (1.0 + x * x)) / (1.0 + x * x),
                    0.0,
                    a,
                    200_000,
                ) / (2.0 * PI);
                let t = owens_t(h, a);
                assert!((t - oracle).abs() < 1e-12, "h={h} a={a}: {t} vs {oracle}");
                assert!((owens_t(-h, -a) + t).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn owens_t_at_zero_h() {
        for &a in &[0.2, 1.0, 3.0] {
            let expected = libm::atan(a) / (2.0 * PI);
            assert!((owens_t(0.0, a) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn faddeeva_known_values() {
        // w(0) = 1, w(i) = erfcx(1) = 0.42758357615580705
        let w0 = faddeeva(Complex64::new(0.0, 0.0));
        assert!((w0.re - 1.0).abs() < 1e-12 && w0.im.abs() < 1e-12);
        let wi = faddeeva(Complex64::new(0.0, 1.0));
        assert!((wi.re - 0.427_583_576_155_807).abs() < 1e-12);
        // on the real axis Re w(x) = exp(-x²)
        for &x in &[0.3, 1.0, 2.2, 4.0] {
            let w = faddeeva_re(x, 0.0);
            assert!((w - libm::exp(-x * x)).abs() < 1e-12, "x={x}");
        }
    }
}
