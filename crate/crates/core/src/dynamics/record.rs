//! Collapse channels, jump logs and shot records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::LinearOperator;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLabel {
    DecayQ1,
    DecayQ2,
    HeatQ1,
    HeatQ2,
    DecayAncilla,
    ResonatorDown,
    ResonatorUp,
    TlsDecay,
    TlsDephase,
    Other(String),
}

#[derive(Clone, Debug)]
pub struct CollapseChannel {
    pub operator: LinearOperator,
    pub rate: f64,
    pub label: ChannelLabel,
}

impl CollapseChannel {
    pub fn new(operator: LinearOperator, rate: f64, label: ChannelLabel) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "collapse rate for {label:?} must be non-negative"
            )));
        }
        Ok(CollapseChannel {
            operator,
            rate,
            label,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub label: ChannelLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckFlag {
    NoErasure,
    Erasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub time: f64,
    pub flag: CheckFlag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalLabel {
    InSubspace,
    Leaked00,
    LeakedMulti,
}

/// Everything postselection needs to know about one shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub check_outcomes: Vec<CheckOutcome>,
    pub final_bits: [u8; 2],
    pub true_final_label: FinalLabel,
    /// Shot ended in the subspace after leaving it (reheated, coherence lost).
    #[serde(default)]
    pub coherence_lost: bool,
    pub seed: u64,
    /// Sweep coordinate of the shot (delay, depth, phase, ...).
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub circuit: u32,
    #[serde(default)]
    pub shot: u32,
    /// Readout expected for an error-free shot, when defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_bits: Option<[u8; 2]>,
}

impl ShotRecord {
    pub fn new(seed: u64) -> Self {
        ShotRecord {
            check_outcomes: Vec::new(),
            final_bits: [0, 0],
            true_final_label: FinalLabel::InSubspace,
            coherence_lost: false,
            seed,
            x: 0.0,
            circuit: 0,
            shot: 0,
            expected_bits: None,
        }
    }

    pub fn any_erasure_flag(&self) -> bool {
        self.check_outcomes
            .iter()
            .any(|c| c.flag == CheckFlag::Erasure)
    }

    /// Final readout lies in {01, 10}.
    pub fn final_in_subspace(&self) -> bool {
        matches!(self.final_bits, [0, 1] | [1, 0])
    }
}
