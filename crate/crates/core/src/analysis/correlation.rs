use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::ShotRecord;

const MIN_SHOTS: u64 = 1000;

/// Sufficient statistics for a Pearson matrix. Bit sums are exact integers
/// in `f64`, so merging bit accumulators is order-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAccumulator {
    n_vars: usize,
    n: u64,
    sum: Vec<f64>,
    /// Upper triangle including the diagonal, row-major.
    cross: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, n: 0, sum: alloc::vec![0.0; n_vars], cross: alloc::vec![0.0; n_vars * (n_vars + 1) / 2] }
    }

    pub fn n_samples(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_vars {
            return Err(Error::invalid("sample length differs from the accumulator width"));
        }
        self.n += 1;
        let mut k = 0;
        for i in 0..self.n_vars {
            self.sum[i] += x[i];
            for j in i..self.n_vars {
                self.cross[k] += x[i] * x[j];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.n_vars != self.n_vars {
            return Err(Error::invalid("merging accumulators of different widths"));
        }
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<CorrelationMatrix> {
        if self.n < MIN_SHOTS {
            return Err(Error::InsufficientSamples { needed: MIN_SHOTS as usize, got: self.n as usize });
        }
        let nv = self.n_vars;
        let n = self.n as f64;
        let idx = |i: usize, j: usize| i * nv - i * (i + 1) / 2 + j;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let mut var = Vec::with_capacity(nv);
        for i in 0..nv {
            let v = self.cross[idx(i, i)] / n - mean[i] * mean[i];
            let scale = 1.0 + mean[i].abs();
            if !(v > 1e-12 * scale * scale) {
                return Err(Error::UndefinedCorrelation(i));
            }
            var.push(v);
        }
        let mut r = alloc::vec![0.0; nv * nv];
        for i in 0..nv {
            r[i * nv + i] = 1.0;
            for j in i + 1..nv {
                let c = self.cross[idx(i, j)] / n - mean[i] * mean[j];
                let v = (c / libm::sqrt(var[i] * var[j])).clamp(-1.0, 1.0);
                r[i * nv + j] = v;
                r[j * nv + i] = v;
            }
        }
        Ok(CorrelationMatrix { n_vars: nv, n_shots: self.n, r, std_error: 1.0 / libm::sqrt(n - 3.0) })
    }
}

/// Symmetric Pearson matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub n_vars: usize,
    pub n_shots: u64,
    /// Row-major.
    pub r: Vec<f64>,
    /// Standard error of one entry near zero correlation.
    pub std_error: f64,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.n_vars + j]
    }

    /// Mean of the off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n_vars;
        let s: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).sum();
        s / (n * (n - 1)) as f64
    }
}

fn from_records(records: &[ShotRecord], targets: &[usize], value: impl Fn(&ShotRecord, usize) -> f64) -> Result<CorrelationMatrix> {
    let mut acc = CorrelationAccumulator::new(targets.len());
    let mut x = alloc::vec![0.0; targets.len()];
    for r in records {
        for (k, &t) in targets.iter().enumerate() {
            if t >= r.nvs.len() {
                return Err(Error::invalid("target index out of range"));
            }
            x[k] = value(r, t);
        }
        acc.push(&x)?;
    }
    acc.finish()
}

/// Pearson correlation of thresholded charge bits over `targets`.
pub fn correlation_from_bits(records: &[ShotRecord], targets: &[usize]) -> Result<CorrelationMatrix> {
    from_records(records, targets, |r, t| r.nvs[t].charge_bit as u8 as f64)
}

/// Same on raw integrated counts; a diagnostic that skips thresholding.
pub fn correlation_from_counts(records: &[ShotRecord], targets: &[usize]) -> Result<CorrelationMatrix> {
    from_records(records, targets, |r, t| r.nvs[t].counts)
}
