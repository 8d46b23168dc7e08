use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::BimodalChargeModel;
use crate::error::{Error, Result};
use crate::optim::bisect;

const GRID_POINTS: usize = 10_000;

/// Optimal charge-readout threshold and the resulting readout fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    /// `P(C < t | NV⁰)`
    pub fidelity_nv0: f64,
    /// `P(C > t | NV⁻)`
    pub fidelity_nvm: f64,
    /// `fidelity_nv0 + fidelity_nvm`
    pub success_total: f64,
    /// `p0 fidelity_nv0 + p- fidelity_nvm`, the maximized objective.
    pub weighted_success: f64,
}

/// `p0 F0(t) + p- (1 - F-(t))`
pub fn success_probability(model: &BimodalChargeModel, t: f64) -> f64 {
    model.p_nv0 * model.mode_nv0.cdf(t) + model.p_nvm() * (1.0 - model.mode_nvm.cdf(t))
}

/// Window that holds essentially all probability mass of both modes.
pub(crate) fn search_window(model: &BimodalChargeModel) -> (f64, f64) {
    let m0 = &model.mode_nv0;
    let m1 = &model.mode_nvm;
    let lo0 = m0.location - 10.0 * m0.scale * (1.0 + m0.shape.abs());
    let lo1 = m1.location - 10.0 * m1.scale * (1.0 + m1.shape.abs());
    let hi0 = m0.location + 10.0 * m0.scale * (1.0 + m0.shape.abs());
    let hi1 = m1.location + 10.0 * m1.scale * (1.0 + m1.shape.abs());
    (lo0.min(lo1), hi0.max(hi1))
}

/// Threshold maximizing the total readout success probability.
///
/// Interior maxima sit where `p0 g0(t) = p- g-(t)`; these are bracketed on a
/// fine grid (in log space, so tails do not underflow) and refined by
/// bisection. The window edges are candidates too, which covers `p0 ∈ {0, 1}`.
pub fn optimal_threshold(model: &BimodalChargeModel) -> Result<ThresholdResult> {
    model.validate()?;
    let (m0, m1) = (&model.mode_nv0, &model.mode_nvm);
    if m0.location == m1.location && m0.scale == m1.scale && m0.shape == m1.shape {
        return Err(Error::AmbiguousThreshold);
    }
    let (lo, hi) = search_window(model);
    let p0 = model.p_nv0;
    let p1 = model.p_nvm();

    let mut candidates: Vec<f64> = alloc::vec![lo, hi];
    if p0 > 0.0 && p1 > 0.0 {
        let (lp0, lp1) = (libm::log(p0), libm::log(p1));
        let h = |t: f64| lp0 + m0.ln_density(t) - lp1 - m1.ln_density(t);
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let mut prev_t = lo;
        let mut prev = h(lo);
        for i in 1..GRID_POINTS {
            let t = lo + step * i as f64;
            let cur = h(t);
            // + to - is a local maximum of the objective
            if prev >= 0.0 && cur < 0.0 {
                if let Some(root) = bisect(h, prev_t, t, 1e-12 * (1.0 + t.abs())) {
                    candidates.push(root);
                }
            }
            prev = cur;
            prev_t = t;
        }
    }

    let mut best = candidates[0];
    let mut best_s = success_probability(model, best);
    for &t in &candidates[1..] {
        let s = success_probability(model, t);
        if s > best_s {
            best = t;
            best_s = s;
        }
    }
    let f0 = m0.cdf(best);
    let f1 = 1.0 - m1.cdf(best);
    Ok(ThresholdResult {
        threshold: best,
        fidelity_nv0: f0,
        fidelity_nvm: f1,
        success_total: f0 + f1,
        weighted_success: best_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statmodels::SkewNormalParams;
    use proptest::prelude::*;

    fn model(p0: f64, a: (f64, f64, f64), b: (f64, f64, f64)) -> BimodalChargeModel {
        BimodalChargeModel::new(
            p0,
            SkewNormalParams::new(a.0, a.1, a.2).unwrap(),
            SkewNormalParams::new(b.0, b.1, b.2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_modes_split_at_midpoint() {
        let m = model(0.5, (40.0, 10.0, 0.0), (110.0, 10.0, 0.0));
        let r = optimal_threshold(&m).unwrap();
        assert!((r.threshold - 75.0).abs() < 1e-9);
        assert!((r.fidelity_nv0 - r.fidelity_nvm).abs() < 1e-12);
        assert_eq!(r.success_total, r.fidelity_nv0 + r.fidelity_nvm);
    }

    #[test]
    fn threshold_moves_up_with_dim_population() {
        let mut last = f64::NEG_INFINITY;
        for k in 1..=99 {
            let p0 = k as f64 / 100.0;
            let r = optimal_threshold(&model(p0, (40.0, 8.0, 2.0), (110.0, 12.0, -1.0))).unwrap();
            assert!(r.threshold >= last - 1e-9, "p0={p0}");
            last = r.threshold;
        }
        let r = optimal_threshold(&model(1.0, (40.0, 8.0, 2.0), (110.0, 12.0, -1.0))).unwrap();
        assert!(r.threshold > 40.0);
        assert!(r.fidelity_nv0 > 1.0 - 1e-12);
    }

    #[test]
    fn identical_modes_are_ambiguous() {
        // two equal modes violate the brightness ordering, so build by hand
        let s = SkewNormalParams::new(50.0, 5.0, 0.0).unwrap();
        let m = BimodalChargeModel { p_nv0: 0.5, mode_nv0: s, mode_nvm: s };
        assert!(optimal_threshold(&m).is_err());
    }

    fn grid_max(m: &BimodalChargeModel) -> (f64, f64) {
        let (lo, hi) = search_window(m);
        let mut best = (lo, f64::NEG_INFINITY);
        for i in 0..GRID_POINTS {
            let t = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
            let s = success_probability(m, t);
            if s > best.1 {
                best = (t, s);
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn threshold_is_locally_and_globally_optimal(
            p0 in 0.02f64..0.98,
            loc0 in 0.0f64..80.0,
            gap in 20.0f64..150.0,
            s0 in 2.0f64..20.0,
            s1 in 2.0f64..20.0,
            a0 in -4.0f64..4.0,
            a1 in -4.0f64..4.0,
        ) {
            let m = model(p0, (loc0, s0, a0), (loc0 + gap, s1, a1));
            let r = optimal_threshold(&m).unwrap();
            let eps = 1e-3 * gap;
            let s = r.weighted_success;
            let (sl, sr) = (success_probability(&m, r.threshold - eps), success_probability(&m, r.threshold + eps));
            // one-ulp slack: far-separated modes leave S flat at 1 - 1e-16
            prop_assert!(s >= sl - 1e-15 && s >= sr - 1e-15, "t={} s={s:e} left={sl:e} right={sr:e}", r.threshold);
            prop_assert!(s >= grid_max(&m).1 - 1e-9);
            prop_assert!((0.0..=1.0).contains(&r.fidelity_nv0));
            prop_assert!((0.0..=1.0).contains(&r.fidelity_nvm));
        }
    }
}
