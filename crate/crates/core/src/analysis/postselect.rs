//! Postselection policies and binomial proportions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::record::{CheckFlag, ShotRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum PostselectionPolicy {
    None,
    FinalReadoutOnly,
    MidChecksOnly,
    Both,
}

impl PostselectionPolicy {
    pub const ALL: [PostselectionPolicy; 4] = [
        PostselectionPolicy::None,
        PostselectionPolicy::FinalReadoutOnly,
        PostselectionPolicy::MidChecksOnly,
        PostselectionPolicy::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PostselectionPolicy::None => "none",
            PostselectionPolicy::FinalReadoutOnly => "final_readout_only",
            PostselectionPolicy::MidChecksOnly => "mid_checks_only",
            PostselectionPolicy::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn keeps(self, r: &ShotRecord) -> bool {
        let checks_ok = || {
            r.check_outcomes
                .iter()
                .all(|c| c.flag == CheckFlag::NoErasure)
        };
        let final_ok = || matches!(r.final_bits, [0, 1] | [1, 0]);
        match self {
            PostselectionPolicy::None => true,
            PostselectionPolicy::FinalReadoutOnly => final_ok(),
            PostselectionPolicy::MidChecksOnly => checks_ok(),
            PostselectionPolicy::Both => checks_ok() && final_ok(),
        }
    }
}

/// A binomial proportion with its 1σ Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (low, high) = wilson_interval(successes, trials, 1.0);
        let value = if trials == 0 {
            f64::NAN
        } else {
            successes as f64 / trials as f64
        };
        Proportion {
            successes,
            trials,
            value,
            low,
            high,
        }
    }

    /// Symmetric error: half the interval width.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.high - self.low)
    }
}

/// Wilson score interval at `z` standard deviations.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug)]
pub struct Postselected<'a> {
    pub survivors: Vec<&'a ShotRecord>,
    pub survival: Proportion,
}

pub fn postselect(records: &[ShotRecord], policy: PostselectionPolicy) -> Result<Postselected<'_>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to postselect".into()));
    }
    let survivors: Vec<&ShotRecord> = records.iter().filter(|r| policy.keeps(r)).collect();
    let survival = Proportion::new(survivors.len(), records.len());
    Ok(Postselected {
        survivors,
        survival,
    })
}

/// Per-x summary of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    /// Fraction of shots kept by the policy.
    pub kept: Proportion,
    /// Among kept shots, fraction reading (1, 0), i.e. |1L⟩.
    pub p_one: Proportion,
    /// Among kept shots, fraction matching the expected bits, when known.
    pub success: Option<Proportion>,
}

/// Groups records by sweep coordinate and summarizes each group.
pub fn curve(records: &[ShotRecord], policy: PostselectionPolicy) -> Result<Vec<CurvePoint>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records".into()));
    }
    let mut groups: BTreeMap<u64, Vec<&ShotRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(ordered_key(r.x)).or_default().push(r);
    }
    Ok(groups
        .into_values()
        .map(|g| {
            let kept: Vec<&&ShotRecord> = g.iter().filter(|r| policy.keeps(r)).collect();
            let ones = kept.iter().filter(|r| r.final_bits == [1, 0]).count();
            let success = if g.iter().all(|r| r.expected_bits.is_some()) {
                Some(Proportion::new(
                    kept.iter()
                        .filter(|r| Some(r.final_bits) == r.expected_bits)
                        .count(),
                    kept.len(),
                ))
            } else {
                None
            };
            CurvePoint {
                x: g[0].x,
                kept: Proportion::new(kept.len(), g.len()),
                p_one: Proportion::new(ones, kept.len()),
                success,
            }
        })
        .collect())
}

/// Sort key preserving the numeric order of finite floats.
fn ordered_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::record::{CheckOutcome, FinalLabel};

    fn record(flags: &[CheckFlag], bits: [u8; 2]) -> ShotRecord {
        let mut r = ShotRecord::new(0);
        r.check_outcomes = flags
            .iter()
            .map(|&flag| CheckOutcome { time: 0.0, flag })
            .collect();
        r.final_bits = bits;
        r.true_final_label = FinalLabel::InSubspace;
        r
    }

    #[test]
    fn hand_enumerated_fixture() {
        use CheckFlag::*;
        let mut recs = Vec::new();
        for _ in 0..3 {
            recs.push(record(&[NoErasure, Erasure], [0, 0]));
        }
        for _ in 0..2 {
            recs.push(record(&[NoErasure, NoErasure], [0, 0]));
        }
        for _ in 0..5 {
            recs.push(record(&[NoErasure, NoErasure], [1, 0]));
        }
        assert_eq!(
            postselect(&recs, PostselectionPolicy::MidChecksOnly)
                .unwrap()
                .survival
                .successes,
            7
        );
        assert_eq!(
            postselect(&recs, PostselectionPolicy::Both)
                .unwrap()
                .survival
                .successes,
            5
        );
        assert_eq!(
            postselect(&recs, PostselectionPolicy::None)
                .unwrap()
                .survival
                .value,
            1.0
        );
    }

    #[test]
    fn all_erased() {
        let recs = vec![record(&[CheckFlag::Erasure], [1, 0]); 4];
        let p = postselect(&recs, PostselectionPolicy::MidChecksOnly).unwrap();
        assert!(p.survivors.is_empty());
        assert_eq!(p.survival.value, 0.0);
        assert!(postselect(&[], PostselectionPolicy::Both).is_err());
    }

    #[test]
    fn wilson_known_values() {
        // k = 0: upper bound z²/(n + z²).
        let (lo, hi) = wilson_interval(0, 10, 1.0);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0 / 11.0).abs() < 1e-12);
        let (lo, hi) = wilson_interval(50, 100, 1.0);
        assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert!((hi - lo - 2.0 * (0.0025f64 + 0.000025).sqrt() / 1.01).abs() < 1e-12);
    }

    #[test]
    fn ordered_key_sorts() {
        let mut v = [3.0, -1.0, 0.0, -7.5, 2.0];
        v.sort_by_key(|&x| ordered_key(x));
        assert_eq!(v, [-7.5, -1.0, 0.0, 2.0, 3.0]);
    }
}
