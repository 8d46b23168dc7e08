use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{NvCenter, Orientation};
use crate::error::{ensure_finite, Error, Result};

/// Microwave hardware shared by every pulse of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrowaveSettings {
    pub rabi_hz: f64,
    /// Scales every flip probability; 1 for a perfect pulse.
    pub pulse_fidelity: f64,
}

impl Default for MicrowaveSettings {
    fn default() -> Self {
        Self { rabi_hz: 8e6, pulse_fidelity: 1.0 }
    }
}

/// Spin re-polarization of not-yet-converted neighbors by an SCC pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SccCrosstalk {
    /// 1/e² radius, µm.
    pub waist_um: f64,
    /// Reset probability for a neighbor at zero displacement.
    pub reset_prob: f64,
}

/// Spin relaxation while NVs wait for their SCC pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinRelaxation {
    /// Single-quantum relaxation rate Ω; contrast decays as `exp(-3Ω t)`.
    pub sq_relaxation_rate_hz: f64,
    /// Time between consecutive SCC pulses (AOD access time).
    pub step_time_s: f64,
}

/// A π-type pulse placed between two SCC pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertedPulse {
    /// Applied after this many NVs have been converted.
    pub after_position: usize,
    pub orientations: Vec<Orientation>,
    pub angle_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// 520-nm pulses in series; each target ends in NV⁻ with `success_prob`.
    ChargePolarizeSerial { targets: Vec<usize>, success_prob: f64 },
    /// 638-nm pulses; targets end in NV⁰.
    Ionize { targets: Vec<usize> },
    /// Optical spin pumping of all NVs into m_s = 0 with probability `fidelity`.
    SpinPolarizeGlobal { fidelity: f64 },
    /// One tone per orientation, at that orientation's mean lower resonance,
    /// unless `frequency_hz` pins a single tone. With `random` set, the pulse
    /// is applied or skipped on a coin shared by the whole shot.
    MicrowavePulse {
        orientations: Vec<Orientation>,
        angle_rad: f64,
        #[serde(default)]
        random: bool,
        #[serde(default)]
        frequency_hz: Option<f64>,
    },
    /// Spin-to-charge conversion, one NV at a time in `ordering`.
    SccSerial {
        ordering: Vec<usize>,
        #[serde(default)]
        inserted_pi_pulses: Vec<InsertedPulse>,
        #[serde(default)]
        crosstalk: Option<SccCrosstalk>,
        #[serde(default)]
        relaxation: Option<SpinRelaxation>,
    },
    /// Camera exposure. NV⁻ is ionized with probability `1 - survival_nvm`
    /// before the counts are drawn.
    Readout { exposure_ms: f64, survival_nvm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    #[serde(default)]
    pub microwave: MicrowaveSettings,
    pub steps: Vec<Step>,
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(format!("{what} = {p} is not a probability")))
    }
}

impl SequenceConfig {
    pub fn validate(&self, nvs: &[NvCenter]) -> Result<()> {
        let n = nvs.len();
        ensure_finite("microwave settings", &[self.microwave.rabi_hz, self.microwave.pulse_fidelity])
            .map_err(|e| Error::config(alloc::string::ToString::to_string(&e)))?;
        if self.microwave.rabi_hz <= 0.0 {
            return Err(Error::config("rabi_hz must be positive"));
        }
        check_prob("pulse_fidelity", self.microwave.pulse_fidelity)?;
        let check_targets = |targets: &[usize], what: &str| -> Result<()> {
            let mut seen = alloc::vec![false; n];
            for &t in targets {
                if t >= n {
                    return Err(Error::config(format!("{what}: NV index {t} out of range (have {n})")));
                }
                if seen[t] {
                    return Err(Error::config(format!("{what}: NV index {t} repeated")));
                }
                seen[t] = true;
                if !nvs[t].usable() {
                    return Err(Error::config(format!(
                        "{what}: NV {} has unusable orientation {:?}",
                        nvs[t].id, nvs[t].orientation
                    )));
                }
            }
            Ok(())
        };
        let mut readouts = 0;
        for (k, step) in self.steps.iter().enumerate() {
            let at = |s: &str| format!("step {k} ({s})");
            match step {
                Step::ChargePolarizeSerial { targets, success_prob } => {
                    check_targets(targets, &at("charge_polarize_serial"))?;
                    check_prob(&at("success_prob"), *success_prob)?;
                }
                Step::Ionize { targets } => check_targets(targets, &at("ionize"))?,
                Step::SpinPolarizeGlobal { fidelity } => check_prob(&at("fidelity"), *fidelity)?,
                Step::MicrowavePulse { orientations, angle_rad, frequency_hz, .. } => {
                    if !angle_rad.is_finite() {
                        return Err(Error::config(at("angle_rad must be finite")));
                    }
                    match frequency_hz {
                        Some(f) if !(f.is_finite() && *f > 0.0) => {
                            return Err(Error::config(at("frequency_hz must be positive")));
                        }
                        Some(_) => {}
                        None => {
                            if orientations.is_empty() {
                                return Err(Error::config(at("microwave pulse needs an orientation or a frequency")));
                            }
                            for o in orientations {
                                if !nvs.iter().any(|nv| nv.orientation == *o) {
                                    return Err(Error::config(at(&format!("no NV with orientation {o:?} to drive"))));
                                }
                            }
                        }
                    }
                }
                Step::SccSerial { ordering, inserted_pi_pulses, crosstalk, relaxation } => {
                    check_targets(ordering, &at("scc_serial"))?;
                    for p in inserted_pi_pulses {
                        if p.after_position > ordering.len() || !p.angle_rad.is_finite() {
                            return Err(Error::config(at("inserted pulse position out of range")));
                        }
                        for o in &p.orientations {
                            if !nvs.iter().any(|nv| nv.orientation == *o) {
                                return Err(Error::config(at(&format!("no NV with orientation {o:?} to drive"))));
                            }
                        }
                    }
                    if let Some(c) = crosstalk {
                        if !(c.waist_um > 0.0 && c.waist_um.is_finite()) {
                            return Err(Error::config(at("crosstalk waist must be positive")));
                        }
                        check_prob(&at("reset_prob"), c.reset_prob)?;
                    }
                    if let Some(r) = relaxation {
                        if !(r.sq_relaxation_rate_hz >= 0.0 && r.step_time_s >= 0.0)
                            || !r.sq_relaxation_rate_hz.is_finite()
                            || !r.step_time_s.is_finite()
                        {
                            return Err(Error::config(at("relaxation rate and step time must be non-negative")));
                        }
                    }
                }
                Step::Readout { exposure_ms, survival_nvm } => {
                    readouts += 1;
                    if !(exposure_ms.is_finite() && *exposure_ms > 0.0) {
                        return Err(Error::config(at("exposure_ms must be positive")));
                    }
                    check_prob(&at("survival_nvm"), *survival_nvm)?;
                }
            }
        }
        if readouts != 1 {
            return Err(Error::config(format!("a shot needs exactly one readout step, found {readouts}")));
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the sequence, recorded in every shot.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.f(self.microwave.rabi_hz);
        h.f(self.microwave.pulse_fidelity);
        let orient = |h: &mut Fnv, os: &[Orientation]| {
            h.u(os.len() as u64);
            for o in os {
                h.u(*o as u64);
            }
        };
        for step in &self.steps {
            match step {
                Step::ChargePolarizeSerial { targets, success_prob } => {
                    h.u(1);
                    h.list(targets);
                    h.f(*success_prob);
                }
                Step::Ionize { targets } => {
                    h.u(2);
                    h.list(targets);
                }
                Step::SpinPolarizeGlobal { fidelity } => {
                    h.u(3);
                    h.f(*fidelity);
                }
                Step::MicrowavePulse { orientations, angle_rad, random, frequency_hz } => {
                    h.u(4);
                    orient(&mut h, orientations);
                    h.f(*angle_rad);
                    h.u(*random as u64);
                    h.f(frequency_hz.unwrap_or(-1.0));
                }
                Step::SccSerial { ordering, inserted_pi_pulses, crosstalk, relaxation } => {
                    h.u(5);
                    h.list(ordering);
                    for p in inserted_pi_pulses {
                        h.u(p.after_position as u64);
                        orient(&mut h, &p.orientations);
                        h.f(p.angle_rad);
                    }
                    if let Some(c) = crosstalk {
                        h.f(c.waist_um);
                        h.f(c.reset_prob);
                    }
                    if let Some(r) = relaxation {
                        h.f(r.sq_relaxation_rate_hz);
                        h.f(r.step_time_s);
                    }
                }
                Step::Readout { exposure_ms, survival_nvm } => {
                    h.u(6);
                    h.f(*exposure_ms);
                    h.f(*survival_nvm);
                }
            }
        }
        h.0
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn u(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    fn f(&mut self, v: f64) {
        self.u(v.to_bits());
    }
    fn list(&mut self, v: &[usize]) {
        self.u(v.len() as u64);
        for &x in v {
            self.u(x as u64);
        }
    }
}
