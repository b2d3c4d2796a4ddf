//! Experiment configuration files.
//!
//! Inline device, noise, check and readout sections use the library's SI
//! units (seconds, rad/s). Experiment fields carry their unit in the name:
//! `_us`, `_ns`, `_mhz` and `_ghz` are cyclic units converted to SI on load.

use std::path::{Path, PathBuf};

use dualrail::analysis::{BudgetInputs, PostselectionPolicy};
use dualrail::device::DeviceParams;
use dualrail::protocols::{CompileMode, ErasureCheckModel, NoiseConfig, ReadoutModel};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PRESETS: [(&str, &str); 1] = [(
    "paper-device",
    "three-transmon dual-rail device with ancilla",
)];

pub fn preset(name: &str) -> Option<DeviceParams> {
    match name {
        "paper-device" | "paper_device" => Some(DeviceParams::paper_device()),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub device: DeviceSpec,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub check: ErasureCheckModel,
    #[serde(default)]
    pub readout: ReadoutModel,
    #[serde(default)]
    pub output: Output,
    pub experiment: Experiment,
}

/// Either a named preset or a full inline parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<DeviceParams>,
}

impl DeviceSpec {
    pub fn resolve(&self) -> Result<DeviceParams, CliError> {
        let p = match (&self.preset, &self.params) {
            (Some(name), None) => preset(name).ok_or_else(|| {
                CliError::Config(format!(
                    "device.preset: unknown preset '{name}' (see `presets list`)"
                ))
            })?,
            (None, Some(p)) => p.clone(),
            (None, None) => {
                return Err(CliError::Config(
                    "device: one of `preset` or `params` is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "device: give either `preset` or `params`, not both".into(),
                ))
            }
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("device.params: {e}")))?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Channel,
    Trajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum GateSource {
    Nominal,
    /// Runs the calibration pipeline first (trajectory mode only).
    Calibrated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Execution {
    pub mode: Mode,
    pub gates: GateSource,
    pub transmon_dim: usize,
    /// Transmon 2 parked above transmon 1 by this much.
    pub delta_offset_mhz: f64,
}

impl Default for Execution {
    fn default() -> Self {
        Execution {
            mode: Mode::Channel,
            gates: GateSource::Nominal,
            transmon_dim: 2,
            delta_offset_mhz: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
    /// Stem of the record and summary files; defaults to the experiment type.
    pub name: Option<String>,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: PathBuf::from("."),
            name: None,
        }
    }
}

/// Evenly spaced values from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Experiment {
    Spectroscopy(Spectroscopy),
    Ramsey(Ramsey),
    Echo(Echo),
    Cpmg(Cpmg),
    T1Logical(T1Logical),
    Rb(Rb),
    ErasureMetrics(ErasureMetrics),
    CheckDephasingSweep(CheckDephasingSweep),
    OperatingPointSweep(OperatingPointSweep),
    BudgetReport(BudgetReport),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectroscopy(_) => "spectroscopy",
            Experiment::Ramsey(_) => "ramsey",
            Experiment::Echo(_) => "echo",
            Experiment::Cpmg(_) => "cpmg",
            Experiment::T1Logical(_) => "t1_logical",
            Experiment::Rb(_) => "rb",
            Experiment::ErasureMetrics(_) => "erasure_metrics",
            Experiment::CheckDephasingSweep(_) => "check_dephasing_sweep",
            Experiment::OperatingPointSweep(_) => "operating_point_sweep",
            Experiment::BudgetReport(_) => "budget_report",
        }
    }

    /// Analytic experiments write result rows instead of shot records.
    pub fn is_analytic(&self) -> bool {
        match self {
            Experiment::Spectroscopy(_) | Experiment::BudgetReport(_) => true,
            Experiment::OperatingPointSweep(_) => true,
            _ => false,
        }
    }
}

fn default_policy() -> PostselectionPolicy {
    PostselectionPolicy::Both
}

/// Avoided crossing of transmons 1 and 2 while sweeping transmon 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Spectroscopy {
    pub omega2_ghz: Range,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Ramsey {
    pub delays_us: Range,
    #[serde(default)]
    pub detuning_mhz: f64,
    pub shots: usize,
    #[serde(default = "default_policy")]
    pub policy: PostselectionPolicy,
}

/// Single refocusing pulse, optionally with checks during the free evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Echo {
    /// Total free-evolution time.
    pub delays_us: Range,
    #[serde(default)]
    pub n_checks: usize,
    pub shots: usize,
    #[serde(default = "default_policy")]
    pub policy: PostselectionPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Cpmg {
    pub n_pulses: usize,
    /// Total free-evolution time.
    pub delays_us: Range,
    #[serde(default)]
    pub n_checks: usize,
    pub shots: usize,
    #[serde(default = "default_policy")]
    pub policy: PostselectionPolicy,
}

/// |1L⟩ held for a delay: erasure lifetime from the subspace population and
/// logical T1 from the postselected bit-flip decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct T1Logical {
    pub delays_us: Range,
    #[serde(default)]
    pub n_checks: usize,
    pub shots: usize,
    #[serde(default = "default_policy")]
    pub policy: PostselectionPolicy,
}

fn default_rb_policies() -> Vec<PostselectionPolicy> {
    vec![
        PostselectionPolicy::Both,
        PostselectionPolicy::MidChecksOnly,
    ]
}

fn default_compile() -> CompileMode {
    CompileMode::VirtualZ
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Rb {
    pub depths: Vec<usize>,
    pub circuits: usize,
    pub shots: usize,
    #[serde(default)]
    pub n_checks: usize,
    /// Idle after each Clifford.
    #[serde(default)]
    pub idle_ns: f64,
    #[serde(default = "default_compile")]
    pub compile: CompileMode,
    #[serde(default = "default_rb_policies")]
    pub policies: Vec<PostselectionPolicy>,
}

fn default_t_eras() -> f64 {
    30.0
}

/// Single checks on |00⟩, |0L⟩, |1L⟩ and an equator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ErasureMetrics {
    pub shots: usize,
    /// Erasure lifetime used for the check-fraction metrics.
    #[serde(default = "default_t_eras")]
    pub t_eras_us: f64,
}

/// Phase acquired per check from inserting M checks in an echo arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CheckDephasingSweep {
    pub m_values: Vec<usize>,
    /// Final-pulse phases per M, evenly covering [0, 2π).
    pub phases: usize,
    pub shots: usize,
    /// Arm length; defaults to the time taken by the largest M.
    #[serde(default)]
    pub arm_us: Option<f64>,
    /// Insert M checks in both arms instead of only the first.
    #[serde(default)]
    pub balanced: bool,
    #[serde(default = "default_policy")]
    pub policy: PostselectionPolicy,
    #[serde(default)]
    pub bound: Option<BoundChain>,
}

/// Upper bound on dephasing per check from a measured coherence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BoundChain {
    pub coherence: f64,
    pub n_checks: u32,
    pub tau_us: f64,
    /// Idling T2 values; `inf` attributes nothing to idling.
    #[serde(with = "maybe_infinite")]
    #[schemars(with = "Vec<f64>")]
    pub t2_us: Vec<f64>,
}

/// JSON has no infinity, so record headers carry it as the string "inf".
mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let r: Vec<Repr> = v
            .iter()
            .map(|&x| {
                if x == f64::INFINITY {
                    Repr::Text("inf".into())
                } else {
                    Repr::Num(x)
                }
            })
            .collect();
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Num(x) => Ok(x),
                Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Repr::Text(t) => Err(serde::de::Error::custom(format!(
                    "expected a number or \"inf\", got \"{t}\""
                ))),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointSweep {
    pub offsets_mhz: Range,
    /// Also measure the gap by simulated Ramsey at every offset.
    #[serde(default)]
    pub ramsey: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BudgetReport {
    #[serde(default = "default_t_phi_echo")]
    pub t_phi_echo_us: f64,
    #[serde(default = "default_n_bar")]
    pub n_bar: f64,
}

fn default_t_phi_echo() -> f64 {
    BudgetInputs::default().t_phi_echo * 1e6
}

fn default_n_bar() -> f64 {
    BudgetInputs::default().n_bar
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn output_name(&self) -> String {
        self.output
            .name
            .clone()
            .unwrap_or_else(|| self.experiment.name().to_string())
    }
}

pub fn schema_json() -> String {
    let schema = schemars::schema_for!(ExperimentConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes")
}
