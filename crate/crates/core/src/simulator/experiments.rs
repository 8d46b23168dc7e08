//! Preset layout and the correlation-detection sequences.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{
    InsertedPulse, MicrowaveSettings, NvCenter, Orientation, SccCrosstalk, SequenceConfig, ShotRecord, Step,
};
use crate::error::{Error, Result};
use crate::optim::bisect;
use crate::statmodels::{optimal_threshold, BimodalChargeModel, SkewNormalParams};

/// Thirteen NVs in a 40 × 16 µm field. Ids 0–9 have usable orientations
/// (A or B); 10–12 do not.
pub fn preset_nvs() -> Vec<NvCenter> {
    use Orientation::*;
    const LAYOUT: [([f64; 2], Orientation); 13] = [
        ([2.0, 3.0], A),
        ([9.0, 1.5], A),
        ([15.0, 5.0], B),
        ([22.0, 2.0], A),
        ([29.0, 4.0], B),
        ([36.0, 2.5], A),
        ([4.0, 10.0], B),
        ([11.0, 13.0], B),
        ([18.0, 9.5], A),
        ([25.0, 14.0], B),
        ([31.0, 10.0], C),
        ([38.0, 13.0], D),
        ([7.0, 6.5], C),
    ];
    let brightness = BimodalChargeModel {
        p_nv0: 0.3,
        mode_nv0: SkewNormalParams { location: 40.0, scale: 9.0, shape: 2.5 },
        mode_nvm: SkewNormalParams { location: 105.0, scale: 14.0, shape: -1.0 },
    };
    LAYOUT
        .iter()
        .enumerate()
        .map(|(id, &(position_um, orientation))| {
            // small deterministic spread of resonances within an orientation
            let jitter = ((id * 7) % 5) as f64 * 0.1e6 - 0.2e6;
            let (low, high) = match orientation {
                A => (2.813e9, 2.928e9),
                B => (2.858e9, 2.885e9),
                C => (2.835e9, 2.905e9),
                D => (2.845e9, 2.895e9),
            };
            NvCenter {
                id,
                position_um,
                orientation,
                resonance_low_hz: low + jitter,
                resonance_high_hz: high + jitter,
                scc_fidelity_given_ms0: 0.9,
                scc_fidelity_given_ms1: 0.35,
                c13_osc_freqs: Vec::new(),
                brightness_model: brightness,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationPattern {
    /// No microwaves.
    Reference,
    /// π pulse between the first and second half of the SCC ordering.
    Block,
    /// Even-indexed targets converted first, then a π pulse, then the odd ones.
    Checkerboard,
    /// Extra π pulse on orientation A only, before SCC.
    Orientation,
}

/// Experimental imperfections of the correlation sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSettings {
    pub charge_init_success: f64,
    pub spin_polarization: f64,
    pub survival_nvm: f64,
    pub exposure_ms: f64,
    pub microwave: MicrowaveSettings,
    #[serde(default)]
    pub crosstalk: Option<SccCrosstalk>,
}

impl Default for CorrelationSettings {
    fn default() -> Self {
        Self {
            charge_init_success: 0.77,
            spin_polarization: 1.0,
            survival_nvm: 0.98,
            exposure_ms: 30.0,
            microwave: MicrowaveSettings { rabi_hz: 8e6, pulse_fidelity: 1.0 },
            crosstalk: None,
        }
    }
}

/// Sign of the correlation the pattern imprints on targets `i`, `j`
/// (positions in `targets`); 0 for the reference.
pub fn ideal_pattern_sign(pattern: CorrelationPattern, nvs: &[NvCenter], targets: &[usize], i: usize, j: usize) -> f64 {
    let half = targets.len() / 2;
    let same = match pattern {
        CorrelationPattern::Reference => return 0.0,
        CorrelationPattern::Block => (i < half) == (j < half),
        CorrelationPattern::Checkerboard => i % 2 == j % 2,
        CorrelationPattern::Orientation => nvs[targets[i]].orientation == nvs[targets[j]].orientation,
    };
    if same {
        1.0
    } else {
        -1.0
    }
}

/// Builds the shot sequence of one pattern. Every non-reference pattern
/// starts with a π pulse on both orientations that is applied or skipped at
/// random, which correlates all spins.
pub fn correlation_sequence(
    pattern: CorrelationPattern,
    nvs: &[NvCenter],
    targets: &[usize],
    settings: &CorrelationSettings,
) -> Result<SequenceConfig> {
    if targets.len() < 2 {
        return Err(Error::config("correlation needs at least two targets"));
    }
    let orientations: Vec<Orientation> = {
        let mut o: Vec<Orientation> = targets.iter().map(|&t| nvs[t].orientation).collect();
        o.sort_by_key(|x| *x as u8);
        o.dedup();
        o
    };
    let mut steps = alloc::vec![
        Step::Ionize { targets: targets.to_vec() },
        Step::ChargePolarizeSerial { targets: targets.to_vec(), success_prob: settings.charge_init_success },
        Step::SpinPolarizeGlobal { fidelity: settings.spin_polarization },
    ];
    if pattern != CorrelationPattern::Reference {
        steps.push(Step::MicrowavePulse {
            orientations: orientations.clone(),
            angle_rad: PI,
            random: true,
            frequency_hz: None,
        });
    }
    let half = targets.len() / 2;
    let flip_all = |after| InsertedPulse { after_position: after, orientations: orientations.clone(), angle_rad: PI };
    let (ordering, inserted) = match pattern {
        CorrelationPattern::Reference => (targets.to_vec(), Vec::new()),
        CorrelationPattern::Block => (targets.to_vec(), alloc::vec![flip_all(half)]),
        CorrelationPattern::Checkerboard => {
            let mut o: Vec<usize> = targets.iter().step_by(2).copied().collect();
            let n_even = o.len();
            o.extend(targets.iter().skip(1).step_by(2));
            (o, alloc::vec![flip_all(n_even)])
        }
        CorrelationPattern::Orientation => {
            steps.push(Step::MicrowavePulse {
                orientations: alloc::vec![Orientation::A],
                angle_rad: PI,
                random: false,
                frequency_hz: None,
            });
            (targets.to_vec(), Vec::new())
        }
    };
    steps.push(Step::SccSerial {
        ordering,
        inserted_pi_pulses: inserted,
        crosstalk: settings.crosstalk,
        relaxation: None,
    });
    steps.push(Step::Readout { exposure_ms: settings.exposure_ms, survival_nvm: settings.survival_nvm });
    let seq = SequenceConfig { microwave: settings.microwave, steps };
    seq.validate(nvs)?;
    Ok(seq)
}

pub fn correlation_experiment(
    pattern: CorrelationPattern,
    nvs: &[NvCenter],
    targets: &[usize],
    settings: &CorrelationSettings,
    n_shots: u64,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    let seq = correlation_sequence(pattern, nvs, targets, settings)?;
    super::run_shots(nvs, &seq, n_shots, seed)
}

/// `(P(bit | m_s = 0), P(bit | m_s = ±1))` for an isolated NV with ideal
/// spin preparation.
pub fn spin_contrast_probabilities(nv: &NvCenter, settings: &CorrelationSettings) -> Result<(f64, f64)> {
    let th = optimal_threshold(&nv.brightness_model)?;
    let (b, a) = (settings.charge_init_success, settings.survival_nvm);
    let bit = |p_nvm: f64| p_nvm * th.fidelity_nvm + (1.0 - p_nvm) * (1.0 - th.fidelity_nv0);
    Ok((
        bit(b * nv.scc_fidelity_given_ms0 * a),
        bit(b * (1.0 - nv.scc_fidelity_given_ms1) * a),
    ))
}

/// `|pa - pb| / sqrt(pa(1-pa) + pb(1-pb))`
pub fn single_shot_snr(pa: f64, pb: f64) -> f64 {
    let v = pa * (1.0 - pa) + pb * (1.0 - pb);
    if v <= 0.0 {
        return 0.0;
    }
    (pa - pb).abs() / libm::sqrt(v)
}

/// SCC ionization fidelity for `m_s = ±1` that gives single-shot SNR `k`.
pub fn tune_scc_ms1_for_snr(nv: &NvCenter, settings: &CorrelationSettings, k: f64) -> Result<f64> {
    let snr = |s1: f64| -> f64 {
        let mut t = nv.clone();
        t.scc_fidelity_given_ms1 = s1;
        spin_contrast_probabilities(&t, settings).map(|(a, b)| single_shot_snr(a, b)).unwrap_or(f64::NAN)
    };
    // SNR rises with s1 once pb drops below pa
    let lo = 1.0 - nv.scc_fidelity_given_ms0;
    if !(snr(1.0) >= k) {
        return Err(Error::config(alloc::format!("single-shot SNR {k} is out of reach (max {})", snr(1.0))));
    }
    bisect(|s| snr(s) - k, lo, 1.0, 1e-12).ok_or_else(|| Error::config("SNR tuning did not bracket"))
}
