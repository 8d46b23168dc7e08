//! Shot-level Monte Carlo engine.
//!
//! Each NV carries a `(charge, spin)` pair with `m_s = ±1` merged into one
//! level. A shot walks the pair through the steps of a [`SequenceConfig`];
//! shot `k` draws from its own RNG stream, so results do not depend on how
//! shots are batched.

mod camera;
mod conditional;
mod engine;
mod experiments;
mod sequence;

pub use camera::{render_frame, render_photons, BaselineWalk, CameraModel, Frame};
pub use conditional::{
    run_conditional_init, run_conditional_init_trials, unconditional_init_mean, ConditionalInitStats,
    ConditionalInitTrajectory,
};
pub use engine::{run_shots, NvOutcome, ShotEngine, ShotRecord};
pub use experiments::{
    correlation_experiment, correlation_sequence, ideal_pattern_sign, preset_nvs, single_shot_snr,
    spin_contrast_probabilities, tune_scc_ms1_for_snr, CorrelationPattern, CorrelationSettings,
};
pub use sequence::{InsertedPulse, MicrowaveSettings, SccCrosstalk, SequenceConfig, SpinRelaxation, Step};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::statmodels::BimodalChargeModel;

pub use crate::statmodels::ChargeState;

/// NV symmetry axis. Under the 589-nm readout polarization only A and B are
/// bright enough to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    A,
    B,
    C,
    D,
}

impl Orientation {
    pub fn usable(self) -> bool {
        matches!(self, Orientation::A | Orientation::B)
    }
}

/// Spin level, with `m_s = ±1` merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinState {
    Ms0,
    Ms1,
}

impl SpinState {
    pub fn flipped(self) -> Self {
        match self {
            SpinState::Ms0 => SpinState::Ms1,
            SpinState::Ms1 => SpinState::Ms0,
        }
    }
}

/// Rates of the conditional-initialization model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    /// `f₋`: P(measured NV⁻ | NV⁻)
    pub fidelity_nvm: f64,
    /// `f₀`: P(measured NV⁰ | NV⁰)
    pub fidelity_nv0: f64,
    /// `a`: effective P(NV⁻ not ionized by one readout), as used by the
    /// closed-form model.
    pub survival_nvm: f64,
    /// `b`: P(one charge-polarization attempt yields NV⁻)
    pub init_success: f64,
}

impl RatesConfig {
    pub fn validate(&self) -> Result<()> {
        let v = [self.fidelity_nvm, self.fidelity_nv0, self.survival_nvm, self.init_success];
        ensure_finite("rates", &v)?;
        if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("rates must lie in [0, 1]"));
        }
        let s = self.fidelity_nvm + self.fidelity_nv0;
        if s <= 1.0 {
            return Err(Error::DegenerateReadout(s));
        }
        Ok(())
    }

    /// `1 - f₀`, the false-NV⁻ probability.
    pub fn false_nvm(&self) -> f64 {
        1.0 - self.fidelity_nv0
    }

    /// Per-readout survival the Monte Carlo must use so that the physical
    /// process reproduces the closed-form coefficients.
    ///
    /// The closed form books an NV⁻ that is registered, ionized by that
    /// readout and falsely registered again as lost. The physical process
    /// keeps that path, so its survival is lowered to compensate:
    /// `a_phys = (f₋ a - q) / (f₋ - q)` with `q = 1 - f₀`.
    pub fn physical_survival(&self) -> Result<f64> {
        self.validate()?;
        let q = self.false_nvm();
        let f = self.fidelity_nvm;
        let a = (f * self.survival_nvm - q) / (f - q);
        if !(0.0..=1.0 + 1e-12).contains(&a) {
            return Err(Error::config(alloc::format!(
                "survival {} is below what fidelities f- = {f}, f0 = {} allow (f- a must be >= 1 - f0)",
                self.survival_nvm, self.fidelity_nv0
            )));
        }
        Ok(a.min(1.0))
    }
}

/// One NV center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvCenter {
    pub id: usize,
    pub position_um: [f64; 2],
    pub orientation: Orientation,
    pub resonance_low_hz: f64,
    pub resonance_high_hz: f64,
    /// P(stays NV⁻ through SCC | m_s = 0)
    pub scc_fidelity_given_ms0: f64,
    /// P(leaves NV⁻ through SCC | m_s = ±1)
    pub scc_fidelity_given_ms1: f64,
    #[serde(default)]
    pub c13_osc_freqs: alloc::vec::Vec<f64>,
    pub brightness_model: BimodalChargeModel,
}

impl NvCenter {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("NV position", &self.position_um)?;
        ensure_finite("NV resonances", &[self.resonance_low_hz, self.resonance_high_hz])?;
        for p in [self.scc_fidelity_given_ms0, self.scc_fidelity_given_ms1] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(alloc::format!("NV {}: SCC fidelities must lie in [0, 1]", self.id)));
            }
        }
        if !matches!(self.c13_osc_freqs.len(), 0 | 2) {
            return Err(Error::config(alloc::format!("NV {}: zero or two 13C frequencies", self.id)));
        }
        self.brightness_model.validate()
    }

    pub fn usable(&self) -> bool {
        self.orientation.usable()
    }

    pub fn distance_um(&self, other: &NvCenter) -> f64 {
        let dx = self.position_um[0] - other.position_um[0];
        let dy = self.position_um[1] - other.position_um[1];
        libm::sqrt(dx * dx + dy * dy)
    }
}
