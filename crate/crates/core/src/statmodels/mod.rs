//! Count models for single-shot charge-state readout.
//!
//! Integrated counts from one NV during a readout exposure follow a mixture
//! of two skew-normal modes, one per charge state:
//!
//! ```text
//! P(C = c) = p0 g0(c) + p- g-(c)
//! ```
//!
//! NV⁰ is the dim mode and NV⁻ the bright one. The threshold that maximizes
//! `P(C < t, NV⁰) + P(C > t, NV⁻)` sits where the weighted densities cross.

mod fit;
mod histogram;
mod skewnormal;
mod threshold;

pub use fit::{fit_bimodal, fit_bimodal_samples, initial_guess, BimodalFit, FitMethod, ModelStdErrors};
pub use histogram::CountHistogram;
pub use skewnormal::{skew_normal_cdf, skew_normal_pdf, SkewNormalParams};
pub use threshold::{optimal_threshold, success_probability, ThresholdResult};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Charge state of an NV center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChargeState {
    /// Neutral, dim under 589-nm readout.
    #[serde(rename = "NV0")]
    Nv0,
    /// Negative, bright and spin-active.
    #[serde(rename = "NVM")]
    Nvm,
}

/// Two-mode skew-normal mixture over integrated counts.
///
/// Only `p_nv0` is stored; `p_nvm` is always `1 - p_nv0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BimodalChargeModel {
    pub p_nv0: f64,
    pub mode_nv0: SkewNormalParams,
    pub mode_nvm: SkewNormalParams,
}

impl BimodalChargeModel {
    pub fn new(p_nv0: f64, mode_nv0: SkewNormalParams, mode_nvm: SkewNormalParams) -> Result<Self> {
        let model = Self { p_nv0, mode_nv0, mode_nvm };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("p_nv0", &[self.p_nv0])?;
        if !(0.0..=1.0).contains(&self.p_nv0) {
            return Err(Error::invalid("p_nv0 must lie in [0, 1]"));
        }
        self.mode_nv0.validate()?;
        self.mode_nvm.validate()?;
        if self.mode_nvm.location <= self.mode_nv0.location {
            return Err(Error::invalid("NV- mode must be brighter than the NV0 mode"));
        }
        Ok(())
    }

    #[inline]
    pub fn p_nvm(&self) -> f64 {
        1.0 - self.p_nv0
    }

    pub fn mode(&self, state: ChargeState) -> &SkewNormalParams {
        match state {
            ChargeState::Nv0 => &self.mode_nv0,
            ChargeState::Nvm => &self.mode_nvm,
        }
    }

    /// Mixture density without argument checks.
    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        self.p_nv0 * self.mode_nv0.density(x) + self.p_nvm() * self.mode_nvm.density(x)
    }

    /// Mixture CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        self.p_nv0 * self.mode_nv0.cdf(x) + self.p_nvm() * self.mode_nvm.cdf(x)
    }

    /// Same modes, different mixture weight.
    pub fn with_p_nv0(&self, p_nv0: f64) -> Result<Self> {
        Self::new(p_nv0, self.mode_nv0, self.mode_nvm)
    }

    /// Draws a charge state from the mixture weights, then its counts.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (ChargeState, f64) {
        let state = if rng.random::<f64>() < self.p_nv0 { ChargeState::Nv0 } else { ChargeState::Nvm };
        (state, self.mode(state).sample(rng))
    }
}

/// Mixture density `p0 g0(x) + p- g-(x)`.
pub fn bimodal_pdf(x: f64, model: &BimodalChargeModel) -> Result<f64> {
    ensure_finite("x", &[x])?;
    model.validate()?;
    Ok(model.density(x))
}

/// Draws integrated counts for an NV known to be in `charge_state`.
pub fn sample_counts<R: Rng + ?Sized>(charge_state: ChargeState, model: &BimodalChargeModel, rng: &mut R) -> f64 {
    model.mode(charge_state).sample(rng)
}
