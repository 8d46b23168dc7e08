//! Run configuration: strict TOML with a schema version.
//!
//! Every field left out of the file takes the default listed here, and the
//! fully resolved configuration is written next to the outputs together with
//! its hash, so a run can always be reconstructed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nvsim_core::simulator::{
    preset_nvs, CameraModel, CorrelationPattern, CorrelationSettings, NvCenter, RatesConfig, SequenceConfig,
};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    #[default]
    Binary,
    Csv,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub records: RecordFormat,
    /// Number of shots rendered as camera frames.
    #[serde(default)]
    pub frames: u32,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { records: RecordFormat::Binary, frames: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningConfig {
    #[serde(default = "default_t_interrogate")]
    pub t_interrogate_s: f64,
    #[serde(default = "default_density")]
    pub nv_density_per_um2: f64,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<u64>,
}

fn default_t_interrogate() -> f64 {
    100e-6
}
fn default_density() -> f64 {
    0.59
}
fn default_n_values() -> Vec<u64> {
    vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000]
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            t_interrogate_s: default_t_interrogate(),
            nv_density_per_um2: default_density(),
            n_values: default_n_values(),
        }
    }
}

/// Conditional-initialization scenario. Rates come from `rates` if given,
/// else from `(c1, c2)` at the fidelities below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalConfig {
    #[serde(default = "default_n_nvs")]
    pub n_nvs: usize,
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_f_nvm")]
    pub fidelity_nvm: f64,
    #[serde(default = "default_f_nv0")]
    pub fidelity_nv0: f64,
}

fn default_n_nvs() -> usize {
    10
}
fn default_attempts() -> usize {
    10
}
fn default_c1() -> f64 {
    0.225
}
fn default_c2() -> f64 {
    0.705
}
fn default_f_nvm() -> f64 {
    0.95
}
fn default_f_nv0() -> f64 {
    0.934
}

impl Default for ConditionalConfig {
    fn default() -> Self {
        Self {
            n_nvs: default_n_nvs(),
            attempts: default_attempts(),
            c1: default_c1(),
            c2: default_c2(),
            fidelity_nvm: default_f_nvm(),
            fidelity_nv0: default_f_nv0(),
        }
    }
}

/// ESR sweep scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsrConfig {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Default for EsrConfig {
    fn default() -> Self {
        Self { start_hz: 2.795e9, stop_hz: 2.875e9, points: 40 }
    }
}

/// The file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub nvs: Option<Vec<NvCenter>>,
    /// Indices into `nvs` that take part; default: every usable NV.
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
    #[serde(default)]
    pub correlation: Option<CorrelationSettings>,
    /// Tune each target's SCC m_s=±1 fidelity to this single-shot SNR;
    /// 0 keeps the given fidelities. Correlation scenarios default to 0.25.
    #[serde(default)]
    pub tune_snr: Option<f64>,
    #[serde(default)]
    pub conditional: ConditionalConfig,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    #[serde(default)]
    pub camera: Option<CameraModel>,
    #[serde(default)]
    pub esr: EsrConfig,
    #[serde(default)]
    pub planning: PlanningConfig,
    /// Sequence for the `custom` scenario.
    #[serde(default)]
    pub sequence: Option<SequenceConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            scenario: None,
            shots: None,
            threads: None,
            output: OutputConfig::default(),
            nvs: None,
            targets: None,
            correlation: None,
            tune_snr: None,
            conditional: ConditionalConfig::default(),
            rates: None,
            camera: None,
            esr: EsrConfig::default(),
            planning: PlanningConfig::default(),
            sequence: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fig2ConditionalInit,
    Fig3Esr,
    Fig4Reference,
    Fig4Block,
    Fig4Checkerboard,
    Fig4Orientation,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Fig2ConditionalInit,
        Scenario::Fig3Esr,
        Scenario::Fig4Reference,
        Scenario::Fig4Block,
        Scenario::Fig4Checkerboard,
        Scenario::Fig4Orientation,
        Scenario::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2ConditionalInit => "fig2-conditional-init",
            Scenario::Fig3Esr => "fig3-esr",
            Scenario::Fig4Reference => "fig4-reference",
            Scenario::Fig4Block => "fig4-block",
            Scenario::Fig4Checkerboard => "fig4-checkerboard",
            Scenario::Fig4Orientation => "fig4-orientation",
            Scenario::Custom => "custom",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
            CliError::Config(format!("unknown scenario {name:?}; expected one of {}", names.join(", ")))
        })
    }

    pub fn pattern(self) -> Option<CorrelationPattern> {
        match self {
            Scenario::Fig4Reference => Some(CorrelationPattern::Reference),
            Scenario::Fig4Block => Some(CorrelationPattern::Block),
            Scenario::Fig4Checkerboard => Some(CorrelationPattern::Checkerboard),
            Scenario::Fig4Orientation => Some(CorrelationPattern::Orientation),
            _ => None,
        }
    }

    fn default_shots(self) -> u64 {
        match self {
            Scenario::Fig2ConditionalInit => 10_000,
            Scenario::Fig3Esr => 2_000,
            _ => 200_000,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub shots: Option<u64>,
    pub threads: Option<usize>,
}

/// Configuration with every choice made.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub schema_version: u32,
    pub seed: u64,
    pub scenario: Scenario,
    pub shots: u64,
    /// Not part of the hash: results do not depend on it.
    #[serde(skip)]
    pub threads: usize,
    pub output: OutputConfig,
    pub nvs: Vec<NvCenter>,
    pub targets: Vec<usize>,
    pub correlation: CorrelationSettings,
    pub tune_snr: Option<f64>,
    pub conditional: ConditionalConfig,
    pub rates: Option<RatesConfig>,
    pub camera: CameraModel,
    pub esr: EsrConfig,
    pub planning: PlanningConfig,
    pub sequence: Option<SequenceConfig>,
}

pub const DEFAULT_SEED: u64 = 20240601;

/// `--threads`, then the file, then `NVSIM_THREADS`, then the core count.
pub fn thread_count(flag: Option<usize>, file: Option<usize>) -> Result<usize, CliError> {
    if let Some(t) = flag.or(file) {
        return if t == 0 { Err(CliError::Config("threads must be at least 1".into())) } else { Ok(t) };
    }
    if let Ok(v) = std::env::var("NVSIM_THREADS") {
        return match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(CliError::Config(format!("NVSIM_THREADS={v:?} is not a positive integer"))),
        };
    }
    Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

impl Resolved {
    pub fn new(cfg: RunConfig, ov: Overrides) -> Result<Self, CliError> {
        let name = ov.scenario.or(cfg.scenario).unwrap_or_else(|| "fig4-block".into());
        let scenario = Scenario::parse(&name)?;
        let nvs = cfg.nvs.unwrap_or_else(preset_nvs);
        for nv in &nvs {
            nv.validate().map_err(|e| CliError::Config(format!("NV {}: {e}", nv.id)))?;
        }
        let targets = cfg.targets.unwrap_or_else(|| (0..nvs.len()).filter(|&i| nvs[i].usable()).collect());
        if let Some(&bad) = targets.iter().find(|&&t| t >= nvs.len()) {
            return Err(CliError::Config(format!("target {bad} is out of range ({} NVs)", nvs.len())));
        }
        if scenario == Scenario::Custom && cfg.sequence.is_none() {
            return Err(CliError::Config("scenario \"custom\" needs a [sequence] table".into()));
        }
        let shots = ov.shots.or(cfg.shots).unwrap_or(scenario.default_shots());
        if shots == 0 {
            return Err(CliError::Config("shots must be positive".into()));
        }
        let camera = cfg.camera.unwrap_or_default();
        camera.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let tune_snr = match cfg.tune_snr {
            Some(0.0) => None,
            Some(k) if k > 0.0 && k <= 1.0 => Some(k),
            Some(_) => return Err(CliError::Config("tune_snr must be 0 or lie in (0, 1]".into())),
            None => scenario.pattern().map(|_| 0.25),
        };
        if cfg.esr.points < 2 || !(cfg.esr.stop_hz > cfg.esr.start_hz) {
            return Err(CliError::Config("esr sweep needs >= 2 points and stop_hz > start_hz".into()));
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed: ov.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            scenario,
            shots,
            threads: thread_count(ov.threads, cfg.threads)?,
            output: cfg.output,
            nvs,
            targets,
            correlation: cfg.correlation.unwrap_or_default(),
            tune_snr,
            conditional: cfg.conditional,
            rates: cfg.rates,
            camera,
            esr: cfg.esr,
            planning: cfg.planning,
            sequence: cfg.sequence,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("resolved config serializes")
    }

    /// SHA-256 of the resolved configuration, hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn default_out_dir(scenario: Scenario) -> PathBuf {
    PathBuf::from("out").join(scenario.name())
}
