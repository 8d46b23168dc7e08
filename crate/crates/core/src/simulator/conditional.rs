use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RatesConfig;
use crate::error::{Error, Result};
use crate::physics::McEstimate;
use crate::rng::{stream_rng, tags};

/// Running sums of the measured NV⁻ count per attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalInitStats {
    pub n_trials: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl ConditionalInitStats {
    pub fn new(attempts: usize) -> Self {
        Self { n_trials: 0, sum: alloc::vec![0.0; attempts + 1], sum_sq: alloc::vec![0.0; attempts + 1] }
    }

    /// Combines two batches. Merging in a fixed order keeps results
    /// bit-identical across thread counts.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.sum.len() != other.sum.len() {
            return Err(Error::invalid("merging stats with different attempt counts"));
        }
        self.n_trials += other.n_trials;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(&self) -> ConditionalInitTrajectory {
        let n = self.n_trials as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let variance: Vec<f64> = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(s2, m)| if n > 1.0 { ((s2 - n * m * m) / (n - 1.0)).max(0.0) } else { 0.0 })
            .collect();
        let std_error = variance.iter().map(|v| libm::sqrt(v / n)).collect();
        ConditionalInitTrajectory { n_trials: self.n_trials, mean, variance, std_error }
    }
}

/// Measured NV⁻ count after attempt `i` (index 0 is the readout before the
/// first attempt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalInitTrajectory {
    pub n_trials: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub std_error: Vec<f64>,
}

fn one_trial<R: Rng>(n_nvs: usize, attempts: usize, rates: &RatesConfig, a_phys: f64, rng: &mut R, out: &mut [u32]) {
    let q = rates.false_nvm();
    let f = rates.fidelity_nvm;
    let b = rates.init_success;
    // all NVs start in NV⁰; `reg` is the last measured state
    let mut nvm = alloc::vec![false; n_nvs];
    let mut reg = alloc::vec![false; n_nvs];
    let mut count = 0;
    for r in reg.iter_mut() {
        *r = rng.random::<f64>() < q;
        count += *r as u32;
    }
    out[0] = count;
    for slot in out.iter_mut().take(attempts + 1).skip(1) {
        count = 0;
        for (c, r) in nvm.iter_mut().zip(reg.iter_mut()) {
            if !*r {
                *c = rng.random::<f64>() < b;
            }
            *r = rng.random::<f64>() < if *c { f } else { q };
            if *c && rng.random::<f64>() >= a_phys {
                *c = false;
            }
            count += *r as u32;
        }
        *slot = count;
    }
}

/// Trials `trials` of conditional initialization of `n_nvs` NVs: every NV
/// last measured as NV⁰ gets another charge-polarization pulse, then all
/// are read again.
pub fn run_conditional_init_trials(
    n_nvs: usize,
    attempts: usize,
    rates: &RatesConfig,
    trials: Range<u64>,
    seed: u64,
) -> Result<ConditionalInitStats> {
    let a_phys = rates.physical_survival()?;
    let mut stats = ConditionalInitStats::new(attempts);
    let mut counts = alloc::vec![0u32; attempts + 1];
    for t in trials {
        let mut rng = stream_rng(seed, tags::CONDITIONAL_INIT, t);
        one_trial(n_nvs, attempts, rates, a_phys, &mut rng, &mut counts);
        for (k, &c) in counts.iter().enumerate() {
            let c = c as f64;
            stats.sum[k] += c;
            stats.sum_sq[k] += c * c;
        }
        stats.n_trials += 1;
    }
    Ok(stats)
}

pub fn run_conditional_init(
    n_nvs: usize,
    attempts: usize,
    rates: &RatesConfig,
    n_trials: u64,
    seed: u64,
) -> Result<ConditionalInitTrajectory> {
    if n_trials < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n_trials as usize });
    }
    Ok(run_conditional_init_trials(n_nvs, attempts, rates, 0..n_trials, seed)?.finish())
}

/// Mean measured NV⁻ count after one global charge-polarization pulse and
/// one readout, with no feedback.
pub fn unconditional_init_mean(n_nvs: usize, rates: &RatesConfig, n_trials: u64, seed: u64) -> Result<McEstimate> {
    rates.validate()?;
    if n_trials < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n_trials as usize });
    }
    let q = rates.false_nvm();
    let (mut s, mut s2) = (0.0, 0.0);
    for t in 0..n_trials {
        let mut rng = stream_rng(seed, tags::CONDITIONAL_INIT, t);
        let mut c = 0u32;
        for _ in 0..n_nvs {
            let nvm = rng.random::<f64>() < rates.init_success;
            c += (rng.random::<f64>() < if nvm { rates.fidelity_nvm } else { q }) as u32;
        }
        let c = c as f64;
        s += c;
        s2 += c * c;
    }
    let n = n_trials as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_error: libm::sqrt(var / n), n_samples: n_trials as usize })
}
