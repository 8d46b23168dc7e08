use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChargeState, NvCenter, Orientation, SequenceConfig, SpinState, Step};
use crate::error::Result;
use crate::physics::{rabi_contrast_at, spin_repolarization_prob};
use crate::rng::{stream_rng, tags};
use crate::statmodels::optimal_threshold;

/// Per-NV result of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvOutcome {
    pub counts: f64,
    /// `counts > threshold`; true reads as NV⁻.
    pub charge_bit: bool,
    /// Charge state during the readout exposure.
    pub true_charge: ChargeState,
    /// Spin of an NV⁻ just before its SCC pulse; `None` if it was NV⁰ or
    /// never converted.
    pub spin_prep: Option<SpinState>,
    /// Spin was re-polarized by a neighbor's SCC pulse.
    pub spin_reset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: u64,
    pub seed: u64,
    pub sequence_hash: u64,
    /// Outcome of the shared coin of random pulses, if the sequence has any.
    pub random_pi: Option<bool>,
    pub nvs: Vec<NvOutcome>,
}

#[derive(Clone, Copy)]
struct NvState {
    charge: ChargeState,
    spin: SpinState,
    spin_prep: Option<SpinState>,
    spin_reset: bool,
}

/// A validated `(nvs, sequence, seed)` triple, ready to produce shots.
#[derive(Debug, Clone)]
pub struct ShotEngine<'a> {
    nvs: &'a [NvCenter],
    sequence: &'a SequenceConfig,
    seed: u64,
    hash: u64,
    thresholds: Vec<f64>,
    has_random: bool,
    /// Squared distances, row-major.
    dist: Vec<f64>,
}

impl<'a> ShotEngine<'a> {
    pub fn new(nvs: &'a [NvCenter], sequence: &'a SequenceConfig, seed: u64) -> Result<Self> {
        for nv in nvs {
            nv.validate()?;
        }
        sequence.validate(nvs)?;
        let thresholds = nvs
            .iter()
            .map(|nv| optimal_threshold(&nv.brightness_model).map(|r| r.threshold))
            .collect::<Result<Vec<_>>>()?;
        let n = nvs.len();
        let mut dist = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = nvs[i].distance_um(&nvs[j]);
            }
        }
        let has_random = sequence.steps.iter().any(|s| matches!(s, Step::MicrowavePulse { random: true, .. }));
        Ok(Self { nvs, sequence, seed, hash: sequence.fingerprint(), thresholds, has_random, dist })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn sequence_hash(&self) -> u64 {
        self.hash
    }

    fn tone(&self, o: Orientation) -> f64 {
        let (sum, n) = self
            .nvs
            .iter()
            .filter(|nv| nv.orientation == o)
            .fold((0.0, 0usize), |(s, n), nv| (s + nv.resonance_low_hz, n + 1));
        sum / n as f64
    }

    fn pulse<R: Rng>(&self, state: &mut [NvState], tones: &[f64], angle: f64, rng: &mut R) {
        let rabi = self.sequence.microwave.rabi_hz;
        let s = libm::sin(0.5 * angle);
        let scale = self.sequence.microwave.pulse_fidelity * s * s;
        for &f in tones {
            for (st, nv) in state.iter_mut().zip(self.nvs) {
                let p = scale * rabi_contrast_at(nv.resonance_low_hz - f, rabi);
                if rng.random::<f64>() < p {
                    st.spin = st.spin.flipped();
                }
            }
        }
    }

    /// Runs shot `index` on its own RNG stream.
    pub fn run_shot(&self, index: u64) -> ShotRecord {
        let mut rng = stream_rng(self.seed, tags::SHOTS, index);
        let n = self.nvs.len();
        let mut state = alloc::vec![
            NvState { charge: ChargeState::Nv0, spin: SpinState::Ms0, spin_prep: None, spin_reset: false };
            n
        ];
        let coin = if self.has_random { Some(rng.random::<bool>()) } else { None };
        let mut outcomes = Vec::new();

        for step in &self.sequence.steps {
            match step {
                Step::ChargePolarizeSerial { targets, success_prob } => {
                    for &t in targets {
                        let ok = rng.random::<f64>() < *success_prob;
                        state[t].charge = if ok { ChargeState::Nvm } else { ChargeState::Nv0 };
                        state[t].spin = SpinState::Ms0;
                    }
                }
                Step::Ionize { targets } => {
                    for &t in targets {
                        state[t].charge = ChargeState::Nv0;
                    }
                }
                Step::SpinPolarizeGlobal { fidelity } => {
                    for st in state.iter_mut() {
                        st.spin = if rng.random::<f64>() < *fidelity { SpinState::Ms0 } else { SpinState::Ms1 };
                    }
                }
                Step::MicrowavePulse { orientations, angle_rad, random, frequency_hz } => {
                    if *random && coin == Some(false) {
                        continue;
                    }
                    let tones: Vec<f64> = match frequency_hz {
                        Some(f) => alloc::vec![*f],
                        None => orientations.iter().map(|&o| self.tone(o)).collect(),
                    };
                    self.pulse(&mut state, &tones, *angle_rad, &mut rng);
                }
                Step::SccSerial { ordering, inserted_pi_pulses, crosstalk, relaxation } => {
                    for pos in 0..=ordering.len() {
                        for p in inserted_pi_pulses.iter().filter(|p| p.after_position == pos) {
                            let tones: Vec<f64> = p.orientations.iter().map(|&o| self.tone(o)).collect();
                            self.pulse(&mut state, &tones, p.angle_rad, &mut rng);
                        }
                        let Some(&i) = ordering.get(pos) else { break };
                        let nv = &self.nvs[i];
                        if let Some(r) = relaxation {
                            let decay = libm::exp(-3.0 * r.sq_relaxation_rate_hz * r.step_time_s * pos as f64);
                            if rng.random::<f64>() >= decay {
                                state[i].spin =
                                    if rng.random::<f64>() < 1.0 / 3.0 { SpinState::Ms0 } else { SpinState::Ms1 };
                            }
                        }
                        let st = &mut state[i];
                        if st.charge == ChargeState::Nvm {
                            st.spin_prep = Some(st.spin);
                            let keep = match st.spin {
                                SpinState::Ms0 => rng.random::<f64>() < nv.scc_fidelity_given_ms0,
                                SpinState::Ms1 => rng.random::<f64>() >= nv.scc_fidelity_given_ms1,
                            };
                            if !keep {
                                st.charge = ChargeState::Nv0;
                            }
                        }
                        if let Some(c) = crosstalk {
                            for &j in &ordering[pos + 1..] {
                                let p = spin_repolarization_prob(self.dist[i * n + j], c.waist_um, c.reset_prob);
                                if rng.random::<f64>() < p {
                                    state[j].spin = SpinState::Ms0;
                                    state[j].spin_reset = true;
                                }
                            }
                        }
                    }
                }
                Step::Readout { survival_nvm, .. } => {
                    outcomes = state
                        .iter_mut()
                        .zip(self.nvs)
                        .zip(&self.thresholds)
                        .map(|((st, nv), &t)| {
                            if st.charge == ChargeState::Nvm && rng.random::<f64>() >= *survival_nvm {
                                st.charge = ChargeState::Nv0;
                            }
                            let counts = nv.brightness_model.mode(st.charge).sample(&mut rng);
                            NvOutcome {
                                counts,
                                charge_bit: counts > t,
                                true_charge: st.charge,
                                spin_prep: st.spin_prep,
                                spin_reset: st.spin_reset,
                            }
                        })
                        .collect();
                }
            }
        }
        ShotRecord { shot_index: index, seed: self.seed, sequence_hash: self.hash, random_pi: coin, nvs: outcomes }
    }

    pub fn run_range(&self, shots: Range<u64>) -> Vec<ShotRecord> {
        shots.map(|k| self.run_shot(k)).collect()
    }
}

/// Runs shots `0..n_shots`.
pub fn run_shots(nvs: &[NvCenter], sequence: &SequenceConfig, n_shots: u64, seed: u64) -> Result<Vec<ShotRecord>> {
    Ok(ShotEngine::new(nvs, sequence, seed)?.run_range(0..n_shots))
}
