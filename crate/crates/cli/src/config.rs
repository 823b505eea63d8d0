use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqcat_core::code::SCParams;
use sqcat_core::dissipation::{NoiseParams, Stabilizer};
use sqcat_core::dynamics::{Readout, Recovery};
use sqcat_core::gates::GateKind;
use sqcat_qec::noise::CxSplit;
use sqcat_qec::optimize::MinLogicalOptions;
use sqcat_qec::threshold::CodeKind;

use crate::sweep::Sweep;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// `.json` selects JSON output; anything else is CSV with a `.meta.json` sidecar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    MemoryRates {
        nbar: f64,
        r: Sweep,
        #[serde(default = "default_noise")]
        noise: NoiseParams,
        #[serde(default = "default_memory_gauge_dim")]
        d: usize,
        #[serde(default = "default_stabilizer")]
        stabilizer: Stabilizer,
        #[serde(default = "default_durations")]
        durations: Vec<f64>,
        /// Skip the master-equation fit and emit the closed-form rates only.
        #[serde(default)]
        predict_only: bool,
    },
    GateSweep {
        gate: GateKind,
        #[serde(default = "operating_point")]
        sc: SCParams,
        #[serde(default = "default_noise")]
        noise: NoiseParams,
        t: Sweep,
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default = "default_gate_gauge_dim")]
        d: usize,
        #[serde(default)]
        mode: GateMode,
    },
    Tomography {
        #[serde(default = "operating_point")]
        sc: SCParams,
        #[serde(default = "default_noise")]
        noise: NoiseParams,
        t: f64,
        #[serde(default = "default_memory_gauge_dim")]
        d: usize,
        #[serde(default = "default_stabilizer")]
        stabilizer: Stabilizer,
        #[serde(default)]
        readout: ReadoutKind,
    },
    EiCurve {
        #[serde(default = "operating_point")]
        sc: SCParams,
        gamma: Sweep,
        #[serde(default)]
        recovery: RecoveryKind,
    },
    ThreeMode {
        #[serde(default = "operating_point")]
        sc: SCParams,
        #[serde(default = "one")]
        gamma_b: f64,
        /// Gamma_a / Gamma_b
        ratio: Sweep,
    },
    Ion {
        #[serde(default = "operating_point")]
        sc: SCParams,
        /// trap frequency, in units where Gamma defaults to 1
        #[serde(default = "default_trap")]
        nu: f64,
        #[serde(default = "default_lamb_dicke")]
        eta0: f64,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default = "default_omega_gf")]
        omega_gf: f64,
        #[serde(default = "default_omega_ef")]
        omega_ef: f64,
        /// defaults to 5 / kappa2
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    ConcatThreshold {
        code: CodeName,
        #[serde(default = "default_dx")]
        dx: usize,
        #[serde(default = "default_distances")]
        dz: Vec<usize>,
        #[serde(default = "default_ratios")]
        ratio: Sweep,
        #[serde(default = "default_shots")]
        shots: u64,
        #[serde(default = "operating_point")]
        sc: SCParams,
        #[serde(default)]
        split: CxSplit,
        /// Fit a threshold to the grid.
        #[serde(default = "yes")]
        fit: bool,
    },
    MinLogical {
        #[serde(default = "operating_point")]
        sc: SCParams,
        ratio: Sweep,
        #[serde(default)]
        options: MinLogicalOptions,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    #[default]
    Simulate,
    Formula,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutKind {
    #[default]
    GaugeTrace,
    CodeBlock,
}

impl From<ReadoutKind> for Readout {
    fn from(r: ReadoutKind) -> Self {
        match r {
            ReadoutKind::GaugeTrace => Readout::GaugeTrace,
            ReadoutKind::CodeBlock => Readout::CodeBlock,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryKind {
    #[default]
    AutoQec,
    None,
}

impl From<RecoveryKind> for Recovery {
    fn from(r: RecoveryKind) -> Self {
        match r {
            RecoveryKind::AutoQec => Recovery::AutoQec,
            RecoveryKind::None => Recovery::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CodeName {
    Repetition,
    Surface,
}

impl CodeName {
    pub fn kind(self, dx: usize) -> CodeKind {
        match self {
            CodeName::Repetition => CodeKind::Repetition,
            CodeName::Surface => CodeKind::Surface { dx },
        }
    }
}

pub fn operating_point() -> SCParams {
    SCParams::from_eta(4.0, 0.25).expect("valid operating point")
}

fn default_noise() -> NoiseParams {
    NoiseParams::new(1e-3, 1.0, 0.0, 0.0)
}

fn default_memory_gauge_dim() -> usize {
    6
}

fn default_gate_gauge_dim() -> usize {
    4
}

fn default_stabilizer() -> Stabilizer {
    Stabilizer::Flip
}

fn default_durations() -> Vec<f64> {
    vec![2.0, 4.0, 6.0, 8.0, 10.0]
}

fn default_theta() -> f64 {
    PI
}

fn default_dx() -> usize {
    3
}

fn default_distances() -> Vec<usize> {
    vec![3, 5, 7, 9]
}

/// Ratio grid bracketing the repetition-code threshold.
pub fn default_ratios() -> Sweep {
    Sweep::Values(vec![0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.010, 0.012, 0.014, 0.017, 0.020])
}

fn default_shots() -> u64 {
    100_000
}

fn default_trap() -> f64 {
    150.0
}

fn default_lamb_dicke() -> f64 {
    0.15
}

fn default_omega_gf() -> f64 {
    0.025
}

fn default_omega_ef() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::MemoryRates { .. } => "memory-rates",
            Experiment::GateSweep { .. } => "gate-sweep",
            Experiment::Tomography { .. } => "tomography",
            Experiment::EiCurve { .. } => "ei-curve",
            Experiment::ThreeMode { .. } => "three-mode",
            Experiment::Ion { .. } => "ion",
            Experiment::ConcatThreshold { .. } => "concat-threshold",
            Experiment::MinLogical { .. } => "min-logical",
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        Self { schema_version: SCHEMA_VERSION, seed, output: None, experiment }
    }

    /// Parses a config, or the config embedded in a previous JSON result.
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if let Some(embedded) = v.get_mut("metadata").and_then(|m| m.get_mut("config")) {
            v = embedded.take();
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| CliError::Schema(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg =
            ExperimentConfig::from_json_str(r#"{"schema_version": 1, "experiment": {"kind": "concat-threshold", "code": "repetition"}}"#).unwrap();
        let Experiment::ConcatThreshold { dz, shots, fit, .. } = &cfg.experiment else { panic!() };
        assert_eq!(dz, &[3, 5, 7, 9]);
        assert_eq!(*shots, 100_000);
        assert!(fit);
    }

    #[test]
    fn unknown_fields_are_rejected_at_every_level() {
        for text in [
            r#"{"schema_version": 1, "extra": 0, "experiment": {"kind": "ei-curve", "gamma": 0.01}}"#,
            r#"{"schema_version": 1, "experiment": {"kind": "ei-curve", "gamma": 0.01, "extra": 0}}"#,
            r#"{"schema_version": 1, "experiment": {"kind": "ei-curve", "gamma": 0.01, "sc": {"nbar": 4, "r": 1, "x": 0}}}"#,
            r#"{"schema_version": 1, "experiment": {"kind": "min-logical", "ratio": 0.001, "options": {"maxdz": 3}}}"#,
            r#"{"schema_version": 1, "experiment": {"kind": "memory-rates", "nbar": 4, "r": 0, "noise": {"kappa1": 0, "kappa2": 1, "kappa_phi": 0, "n_th": 0, "k": 1}}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json_str(text), Err(CliError::Schema(_))), "{text}");
        }
    }

    #[test]
    fn unknown_kind_and_version_are_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"schema_version": 1, "experiment": {"kind": "wigner"}}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"schema_version": 2, "experiment": {"kind": "ei-curve", "gamma": 0}}"#).is_err());
    }

    #[test]
    fn serialization_round_trips() {
        let cfg = ExperimentConfig::new(
            Experiment::GateSweep {
                gate: GateKind::CX,
                sc: operating_point(),
                noise: default_noise(),
                t: "0.5:2:4".parse().unwrap(),
                theta: PI,
                d: 4,
                mode: GateMode::Formula,
            },
            7,
        );
        let back = ExperimentConfig::from_json_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&cfg).unwrap());
    }
}
