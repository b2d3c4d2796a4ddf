//! Final pair readout with per-transmon assignment errors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::record::FinalLabel;
use crate::error::{Error, Result};
use crate::hilbert::{CVector, LogicalProjectors};
use crate::protocols::check::PairState;
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct ReadoutModel {
    /// p(read 1 | state 0) for transmons 1 and 2.
    pub p1_given0: [f64; 2],
    /// p(read 0 | state 1) for transmons 1 and 2.
    pub p0_given1: [f64; 2],
    pub duration: f64,
}

impl Default for ReadoutModel {
    /// Dominated by decay during readout, which puts roughly 10% of |10⟩ or
    /// |01⟩ shots into the (0, 0) outcome.
    fn default() -> Self {
        ReadoutModel {
            p1_given0: [0.01; 2],
            p0_given1: [0.10; 2],
            duration: 1e-6,
        }
    }
}

impl ReadoutModel {
    pub fn perfect() -> Self {
        ReadoutModel {
            p1_given0: [0.0; 2],
            p0_given1: [0.0; 2],
            duration: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.p1_given0.iter().chain(&self.p0_given1) {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidArgument(
                    "readout error probabilities must lie in [0, 1]".into(),
                ));
            }
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidArgument(
                "readout duration must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Confusion matrix [[p(0|0), p(1|0)], [p(0|1), p(1|1)]] of transmon k.
    pub fn confusion(&self, k: usize) -> [[f64; 2]; 2] {
        [
            [1.0 - self.p1_given0[k], self.p1_given0[k]],
            [self.p0_given1[k], 1.0 - self.p0_given1[k]],
        ]
    }

    /// Applies independent assignment errors to true bits.
    pub fn corrupt(&self, bits: [u8; 2], rng: &mut SimRng) -> [u8; 2] {
        let mut out = bits;
        for k in 0..2 {
            let p_flip = if bits[k] == 0 {
                self.p1_given0[k]
            } else {
                self.p0_given1[k]
            };
            if p_flip > 0.0 && rng.random::<f64>() < p_flip {
                out[k] ^= 1;
            }
        }
        out
    }
}

/// True pair bits of a logical outcome: |0L⟩ → (0, 1), |1L⟩ → (1, 0).
pub fn logical_bits(one: bool) -> [u8; 2] {
    if one {
        [1, 0]
    } else {
        [0, 1]
    }
}

fn label_bits(label: FinalLabel, one: bool) -> [u8; 2] {
    match label {
        FinalLabel::InSubspace => logical_bits(one),
        FinalLabel::Leaked00 => [0, 0],
        FinalLabel::LeakedMulti => [1, 1],
    }
}

/// Projective readout of a trajectory state in {|00⟩, |0L⟩, |1L⟩, rest},
/// followed by assignment errors. Returns reported bits and the true label.
pub fn final_readout(
    psi: &CVector,
    projectors: &LogicalProjectors,
    model: &ReadoutModel,
    rng: &mut SimRng,
) -> ([u8; 2], FinalLabel) {
    let pop = |p: &crate::hilbert::LinearOperator| (p.matrix() * psi).norm_squared();
    let total = psi.norm_squared();
    let (p00, p0, p1) = (
        pop(&projectors.p00) / total,
        pop(&projectors.p0l) / total,
        pop(&projectors.p1l) / total,
    );
    let r = rng.random::<f64>();
    let (label, one) = if r < p00 {
        (FinalLabel::Leaked00, false)
    } else if r < p00 + p0 {
        (FinalLabel::InSubspace, false)
    } else if r < p00 + p0 + p1 {
        (FinalLabel::InSubspace, true)
    } else {
        (FinalLabel::LeakedMulti, false)
    };
    (model.corrupt(label_bits(label, one), rng), label)
}

/// Readout of a logical-level state.
pub fn final_readout_pair(
    state: &PairState,
    model: &ReadoutModel,
    rng: &mut SimRng,
) -> ([u8; 2], FinalLabel) {
    let (label, one) = match state {
        PairState::Vacuum => (FinalLabel::Leaked00, false),
        PairState::Subspace(v) => {
            let p1 = v[1].norm_sqr() / (v[0].norm_sqr() + v[1].norm_sqr());
            (FinalLabel::InSubspace, rng.random::<f64>() < p1)
        }
    };
    (model.corrupt(label_bits(label, one), rng), label)
}
