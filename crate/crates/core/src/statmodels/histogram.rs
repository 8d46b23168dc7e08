use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};

/// Binned integrated counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountHistogram {
    bin_edges: Vec<f64>,
    bin_counts: Vec<u64>,
    total_shots: u64,
}

impl CountHistogram {
    pub fn new(bin_edges: Vec<f64>, bin_counts: Vec<u64>) -> Result<Self> {
        if bin_counts.is_empty() || bin_edges.len() != bin_counts.len() + 1 {
            return Err(Error::invalid("histogram needs len(bin_edges) = len(bin_counts) + 1 and at least one bin"));
        }
        ensure_finite("bin edges", &bin_edges)?;
        if bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("bin edges must be strictly increasing"));
        }
        let total_shots = bin_counts.iter().sum();
        Ok(Self { bin_edges, bin_counts, total_shots })
    }

    /// Uniform bins over `[lo, hi]`. Samples outside the range are dropped.
    pub fn from_samples_range(samples: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        ensure_finite("histogram range", &[lo, hi])?;
        if n_bins == 0 || hi <= lo {
            return Err(Error::invalid("histogram range must be non-empty with at least one bin"));
        }
        let width = (hi - lo) / n_bins as f64;
        let edges = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        let mut counts = alloc::vec![0u64; n_bins];
        for &x in samples {
            if !x.is_finite() || x < lo || x > hi {
                continue;
            }
            let k = (((x - lo) / width) as usize).min(n_bins - 1);
            counts[k] += 1;
        }
        Self::new(edges, counts)
    }

    /// Uniform bins spanning the sample range.
    pub fn from_samples(samples: &[f64], n_bins: usize) -> Result<Self> {
        ensure_finite("samples", samples)?;
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if !(lo < hi) {
            return Err(Error::DegenerateFit("samples span an empty range".into()));
        }
        let pad = 1e-9 * (hi - lo);
        Self::from_samples_range(samples, lo - pad, hi + pad, n_bins)
    }

    /// Rebuilds a histogram from bin centers, assuming uniform spacing.
    pub fn from_centers(centers: &[f64], counts: Vec<u64>) -> Result<Self> {
        if centers.len() != counts.len() || centers.len() < 2 {
            return Err(Error::invalid("need at least two bin centers, one per count"));
        }
        ensure_finite("bin centers", centers)?;
        let mut edges = Vec::with_capacity(centers.len() + 1);
        edges.push(centers[0] - 0.5 * (centers[1] - centers[0]));
        for w in centers.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        let n = centers.len();
        edges.push(centers[n - 1] + 0.5 * (centers[n - 1] - centers[n - 2]));
        Self::new(edges, counts)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn bin_counts(&self) -> &[u64] {
        &self.bin_counts
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn n_bins(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1])
    }
}
