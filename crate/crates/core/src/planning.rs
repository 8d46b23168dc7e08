//! Measurement-time and scalability calculators.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Single-shot SNR and timing of one measurement modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityParams {
    pub single_shot_snr: f64,
    pub t_overhead_serial_s: f64,
    pub t_interrogate_serial_s: f64,
    pub t_overhead_parallel_s: f64,
    pub t_interrogate_parallel_s: f64,
    pub prefactor_independent: f64,
    pub prefactor_correlated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    ConventionalSerial,
    ConventionalParallel,
    SccSerial,
    SccParallel,
    SccParallelProjected,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::ConventionalSerial,
        Modality::ConventionalParallel,
        Modality::SccSerial,
        Modality::SccParallel,
        Modality::SccParallelProjected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::ConventionalSerial => "conventional-serial",
            Modality::ConventionalParallel => "conventional-parallel",
            Modality::SccSerial => "scc-serial",
            Modality::SccParallel => "scc-parallel",
            Modality::SccParallelProjected => "scc-parallel-projected",
        }
    }

    pub fn is_parallel(self) -> bool {
        !matches!(self, Modality::ConventionalSerial | Modality::SccSerial)
    }

    /// Built-in parameters with interrogation time `t_interrogate_s` and
    /// unit prefactors.
    pub fn preset(self, t_interrogate_s: f64) -> ModalityParams {
        // (k, t_o,s, t_o,p)
        let (k, tos, top) = match self {
            Modality::ConventionalSerial => (0.03, 0.3e-6, 0.0),
            Modality::ConventionalParallel => (0.02, 0.0, 0.3e-6),
            Modality::SccSerial => (0.25, 5e-3, 0.0),
            Modality::SccParallel => (0.25, 21e-6, 62e-3),
            Modality::SccParallelProjected => (0.25, 21e-6, 17e-3),
        };
        let (tis, tip) = if self.is_parallel() { (0.0, t_interrogate_s) } else { (t_interrogate_s, 0.0) };
        ModalityParams {
            single_shot_snr: k,
            t_overhead_serial_s: tos,
            t_interrogate_serial_s: tis,
            t_overhead_parallel_s: top,
            t_interrogate_parallel_s: tip,
            prefactor_independent: 1.0,
            prefactor_correlated: 1.0,
        }
    }
}

impl ModalityParams {
    pub fn validate(&self) -> Result<()> {
        let times = [
            self.t_overhead_serial_s,
            self.t_interrogate_serial_s,
            self.t_overhead_parallel_s,
            self.t_interrogate_parallel_s,
        ];
        ensure_finite("modality", &times)?;
        ensure_finite("modality", &[self.single_shot_snr, self.prefactor_independent, self.prefactor_correlated])?;
        if !(self.single_shot_snr > 0.0 && self.single_shot_snr <= 1.0) {
            return Err(Error::invalid("single-shot SNR must lie in (0, 1]"));
        }
        if times.iter().any(|&t| t < 0.0) || self.prefactor_independent < 0.0 || self.prefactor_correlated < 0.0 {
            return Err(Error::invalid("times and prefactors must be non-negative"));
        }
        Ok(())
    }

    fn shot_time(&self, n: u64) -> f64 {
        n as f64 * (self.t_overhead_serial_s + self.t_interrogate_serial_s)
            + self.t_overhead_parallel_s
            + self.t_interrogate_parallel_s
    }
}

/// `A k⁻² [n (t_o,s + t_i,s) + t_o,p + t_i,p]`
pub fn time_to_unit_snr_independent(params: &ModalityParams, n: u64) -> Result<f64> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("need at least one NV"));
    }
    let k = params.single_shot_snr;
    Ok(params.prefactor_independent / (k * k) * params.shot_time(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelatedMode {
    /// One pair at a time: `B k⁻⁴ C(n,2) (t_o,s + t_i,s)`.
    Serial,
    /// All pairs from the same shots: `B k⁻⁴ [n (t_o,s + t_i,s) + t_o,p + t_i,p]`.
    Parallel,
}

pub fn time_to_unit_snr_correlated(params: &ModalityParams, n: u64, mode: CorrelatedMode) -> Result<f64> {
    params.validate()?;
    if n < 2 {
        return Err(Error::invalid("correlations need at least two NVs"));
    }
    let k2 = params.single_shot_snr * params.single_shot_snr;
    let scale = params.prefactor_correlated / (k2 * k2);
    Ok(match mode {
        CorrelatedMode::Serial => {
            let pairs = (n * (n - 1) / 2) as f64;
            scale * pairs * (params.t_overhead_serial_s + params.t_interrogate_serial_s)
        }
        CorrelatedMode::Parallel => scale * params.shot_time(n),
    })
}

/// Smallest `n` in `1..=n_max` where `fast` needs less time than `slow`.
pub fn crossover_n(fast: &ModalityParams, slow: &ModalityParams, n_max: u64) -> Result<Option<u64>> {
    for n in 1..=n_max {
        if time_to_unit_snr_independent(fast, n)? < time_to_unit_snr_independent(slow, n)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// `floor(x)` that forgives the last-bit error of a product that should
/// be an integer.
fn floor_count(x: f64) -> u64 {
    if !x.is_finite() {
        return u64::MAX;
    }
    libm::floor(x * (1.0 + 1e-12)).max(0.0) as u64
}

/// One AOD channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AodChannel {
    pub dispersion_um_per_mhz: f64,
    pub rf_bandwidth_mhz: f64,
}

impl AodChannel {
    /// 520-nm deflector.
    pub const GREEN: AodChannel = AodChannel { dispersion_um_per_mhz: 2.76, rf_bandwidth_mhz: 45.0 };
    /// 638-nm deflector.
    pub const RED: AodChannel = AodChannel { dispersion_um_per_mhz: 3.33, rf_bandwidth_mhz: 40.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalabilityParams {
    /// Zero means relaxation never limits.
    pub sq_relaxation_rate_hz: f64,
    pub aod_access_time_s: f64,
    pub dispersion_um_per_mhz: f64,
    pub rf_bandwidth_mhz: f64,
    pub nv_density_per_um2: f64,
    pub beam_fraction: f64,
}

impl ScalabilityParams {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.sq_relaxation_rate_hz,
            self.aod_access_time_s,
            self.dispersion_um_per_mhz,
            self.rf_bandwidth_mhz,
            self.nv_density_per_um2,
            self.beam_fraction,
        ];
        ensure_finite("scalability", &v)?;
        if self.sq_relaxation_rate_hz < 0.0 || v[1..].iter().any(|&x| x <= 0.0) || self.beam_fraction > 1.0 {
            return Err(Error::invalid("scalability inputs must be positive with beam_fraction <= 1"));
        }
        Ok(())
    }

    /// Room-temperature context with `1/(3Ω)` = `contrast_lifetime_s`,
    /// the green AOD and a 10 µs aperture-filling access time.
    pub fn room_temperature(contrast_lifetime_s: f64, nv_density_per_um2: f64) -> Self {
        Self {
            sq_relaxation_rate_hz: 1.0 / (3.0 * contrast_lifetime_s),
            aod_access_time_s: 10e-6,
            dispersion_um_per_mhz: AodChannel::GREEN.dispersion_um_per_mhz,
            rf_bandwidth_mhz: AodChannel::GREEN.rf_bandwidth_mhz,
            nv_density_per_um2,
            beam_fraction: 1.0,
        }
    }

    /// Bulk (5 ms), shallow (3 ms) and nanodiamond (1 ms) contrast lifetimes.
    pub fn contexts(nv_density_per_um2: f64) -> [(&'static str, Self); 3] {
        [
            ("bulk", Self::room_temperature(5e-3, nv_density_per_um2)),
            ("shallow", Self::room_temperature(3e-3, nv_density_per_um2)),
            ("nanodiamond", Self::room_temperature(1e-3, nv_density_per_um2)),
        ]
    }

    pub fn with_aod(mut self, aod: AodChannel) -> Self {
        self.dispersion_um_per_mhz = aod.dispersion_um_per_mhz;
        self.rf_bandwidth_mhz = aod.rf_bandwidth_mhz;
        self
    }
}

/// `1 / (3Ω τ s)`: access time shrinks linearly with the beam.
pub fn n_relaxation_curve(sq_relaxation_rate_hz: f64, aod_access_time_s: f64, beam_fraction: f64) -> f64 {
    1.0 / (3.0 * sq_relaxation_rate_hz * aod_access_time_s * beam_fraction)
}

pub fn max_n_relaxation(sq_relaxation_rate_hz: f64, aod_access_time_s: f64, beam_fraction: f64) -> u64 {
    floor_count(n_relaxation_curve(sq_relaxation_rate_hz, aod_access_time_s, beam_fraction))
}

/// `d (s ∂x/∂f δf)²`: dispersion shrinks linearly with the beam.
pub fn n_bandwidth_curve(nv_density_per_um2: f64, dispersion_um_per_mhz: f64, rf_bandwidth_mhz: f64, beam_fraction: f64) -> f64 {
    let fov = beam_fraction * dispersion_um_per_mhz * rf_bandwidth_mhz;
    nv_density_per_um2 * fov * fov
}

pub fn max_n_bandwidth(nv_density_per_um2: f64, dispersion_um_per_mhz: f64, rf_bandwidth_mhz: f64, beam_fraction: f64) -> u64 {
    floor_count(n_bandwidth_curve(nv_density_per_um2, dispersion_um_per_mhz, rf_bandwidth_mhz, beam_fraction))
}

/// Binding bandwidth bound over several deflectors.
pub fn max_n_bandwidth_aods(nv_density_per_um2: f64, aods: &[AodChannel], beam_fraction: f64) -> Option<u64> {
    aods.iter()
        .map(|a| max_n_bandwidth(nv_density_per_um2, a.dispersion_um_per_mhz, a.rf_bandwidth_mhz, beam_fraction))
        .min()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamOptimum {
    pub beam_fraction: f64,
    /// Where the two curves cross (real-valued).
    pub n_max: f64,
    pub n_max_floor: u64,
}

/// Beam size where the relaxation bound (∝ 1/s) meets the bandwidth bound
/// (∝ s²): `s* = (n_relax(1) / n_bw(1))^(1/3)`, capped at a full aperture.
pub fn optimal_beam_fraction(params: &ScalabilityParams) -> Result<BeamOptimum> {
    params.validate()?;
    let nr = n_relaxation_curve(params.sq_relaxation_rate_hz, params.aod_access_time_s, 1.0);
    let nb = n_bandwidth_curve(params.nv_density_per_um2, params.dispersion_um_per_mhz, params.rf_bandwidth_mhz, 1.0);
    let s = libm::cbrt(nr / nb);
    if s >= 1.0 {
        let n = nr.min(nb);
        return Ok(BeamOptimum { beam_fraction: 1.0, n_max: n, n_max_floor: floor_count(n) });
    }
    let n = nr / s;
    Ok(BeamOptimum { beam_fraction: s, n_max: n, n_max_floor: floor_count(n) })
}

/// `(s, n_relax(s), n_bw(s))` on `points` beam fractions in `(0, 1]`.
pub fn scalability_curves(params: &ScalabilityParams, points: usize) -> Vec<(f64, f64, f64)> {
    (1..=points)
        .map(|i| {
            let s = i as f64 / points as f64;
            (
                s,
                n_relaxation_curve(params.sq_relaxation_rate_hz, params.aod_access_time_s, s),
                n_bandwidth_curve(params.nv_density_per_um2, params.dispersion_um_per_mhz, params.rf_bandwidth_mhz, s),
            )
        })
        .collect()
}

/// Time to unit SNR of every built-in modality at each `n`.
pub fn independent_table(t_interrogate_s: f64, ns: &[u64]) -> Result<Vec<(u64, [f64; 5])>> {
    ns.iter()
        .map(|&n| {
            let mut row = [0.0; 5];
            for (slot, m) in row.iter_mut().zip(Modality::ALL) {
                *slot = time_to_unit_snr_independent(&m.preset(t_interrogate_s), n)?;
            }
            Ok((n, row))
        })
        .collect()
}
