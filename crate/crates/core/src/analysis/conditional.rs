use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::optim::{levenberg_marquardt, LsqOptions};
use crate::simulator::RatesConfig;

/// `n_{i+1} = c1 n_i + c2 N` for the measured NV⁻ count of `N` NVs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalInitModel {
    pub c1: f64,
    pub c2: f64,
}

impl ConditionalInitModel {
    pub fn steady_state(&self, n_nvs: usize) -> Result<f64> {
        if self.c1 == 1.0 {
            return Err(Error::SingularModel("c1 = 1 has no steady state".into()));
        }
        Ok(self.c2 * n_nvs as f64 / (1.0 - self.c1))
    }

    /// Expected count after `attempt` attempts starting from `n0`:
    /// `n_ss + (n0 - n_ss) c1^i`.
    pub fn predict(&self, n_nvs: usize, n0: f64, attempt: u32) -> Result<f64> {
        ensure_finite("model", &[self.c1, self.c2, n0])?;
        let ss = self.steady_state(n_nvs)?;
        Ok(ss + (n0 - ss) * libm::pow(self.c1, attempt as f64))
    }

    pub fn predict_trajectory(&self, n_nvs: usize, n0: f64, attempts: u32) -> Result<Vec<f64>> {
        (0..=attempts).map(|i| self.predict(n_nvs, n0, i)).collect()
    }
}

fn check_readout(rates: &RatesConfig) -> Result<()> {
    rates.validate()
}

/// Coefficients implied by the four rates.
pub fn coeffs_from_rates(rates: &RatesConfig) -> Result<ConditionalInitModel> {
    check_readout(rates)?;
    let (f, a, b) = (rates.fidelity_nvm, rates.survival_nvm, rates.init_success);
    let q = rates.false_nvm();
    let d = f + rates.fidelity_nv0 - 1.0;
    let u = (f * f * a - q * q) / d;
    let y = f * b + q * (1.0 - b);
    Ok(ConditionalInitModel { c1: u - y, c2: y + q * q - q * u })
}

/// Inverse of [`coeffs_from_rates`] for `a` and `b` at known fidelities.
pub fn rates_from_coeffs(model: &ConditionalInitModel, fidelity_nvm: f64, fidelity_nv0: f64) -> Result<RatesConfig> {
    ensure_finite("coefficients", &[model.c1, model.c2])?;
    let q = 1.0 - fidelity_nv0;
    let f = fidelity_nvm;
    let d = f + fidelity_nv0 - 1.0;
    if d <= 0.0 {
        return Err(Error::DegenerateReadout(d + 1.0));
    }
    if f <= q {
        return Err(Error::SingularModel("f- must exceed 1 - f0 to recover b".into()));
    }
    let u = (model.c1 + model.c2 - q * q) / (1.0 - q);
    let y = u - model.c1;
    let rates = RatesConfig {
        fidelity_nvm,
        fidelity_nv0,
        survival_nvm: (u * d + q * q) / (f * f),
        init_success: (y - q) / (f - q),
    };
    rates.validate()?;
    Ok(rates)
}

/// Actual NV⁻ count from a measured one: `(n - (1 - f0) N) / (f- + f0 - 1)`.
pub fn actual_from_measured(measured: f64, n_nvs: usize, fidelity_nvm: f64, fidelity_nv0: f64) -> Result<f64> {
    ensure_finite("measured count", &[measured])?;
    let d = fidelity_nvm + fidelity_nv0 - 1.0;
    if d <= 0.0 {
        return Err(Error::DegenerateReadout(d + 1.0));
    }
    Ok((measured - (1.0 - fidelity_nv0) * n_nvs as f64) / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFit {
    pub model: ConditionalInitModel,
    /// `[se(c1), se(c2)]`
    pub std_errors: [f64; 2],
    pub rms_residual: f64,
}

/// Unweighted least-squares fit of the closed form to mean counts
/// `means[i]` after attempt `i`, with `means[0]` taken as the start.
pub fn fit_conditional_model(means: &[f64], n_nvs: usize) -> Result<ConditionalFit> {
    if means.len() < 4 {
        return Err(Error::InsufficientSamples { needed: 4, got: means.len() });
    }
    ensure_finite("attempt means", means)?;
    if n_nvs == 0 {
        return Err(Error::invalid("need at least one NV"));
    }
    let n = n_nvs as f64;
    let n0 = means[0];
    let m = means.len() - 1;
    // start from a one-step regression n_{i+1} on n_i
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for w in means.windows(2) {
        sx += w[0];
        sy += w[1];
        sxx += w[0] * w[0];
        sxy += w[0] * w[1];
    }
    let k = m as f64;
    let den = k * sxx - sx * sx;
    let c1_0 = if den.abs() > 1e-12 { ((k * sxy - sx * sy) / den).clamp(-0.99, 0.99) } else { 0.5 };
    let c2_0 = (sy - c1_0 * sx) / (k * n);
    let res = levenberg_marquardt(
        |p, out| {
            let mut x = n0;
            for (o, &y) in out.iter_mut().zip(&means[1..]) {
                x = p[0] * x + p[1] * n;
                *o = x - y;
            }
        },
        &[c1_0, c2_0],
        m,
        LsqOptions::default(),
    );
    if !res.converged {
        return Err(Error::FitFailure { iterations: res.iterations, best: res.x });
    }
    let s2 = if m > 2 { res.sum_squares / (m - 2) as f64 } else { 0.0 };
    let std_errors = match &res.inverse_normal {
        Some(c) => [libm::sqrt(c[0] * s2), libm::sqrt(c[3] * s2)],
        None => return Err(Error::SingularModel("flat trajectory does not determine c1".into())),
    };
    Ok(ConditionalFit {
        model: ConditionalInitModel { c1: res.x[0], c2: res.x[1] },
        std_errors,
        rms_residual: libm::sqrt(res.sum_squares / m as f64),
    })
}
