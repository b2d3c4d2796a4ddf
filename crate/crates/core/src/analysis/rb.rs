//! Randomized-benchmarking analysis with erasure postselection.

use serde::{Deserialize, Serialize};

use crate::analysis::fit::{fit_rb_erasure, fit_rb_survival, FitResult};
use crate::analysis::postselect::{curve, PostselectionPolicy, Proportion};
use crate::dynamics::record::ShotRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    fn half(self) -> Estimate {
        Estimate {
            value: 0.5 * self.value,
            sigma: 0.5 * self.sigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbDepthPoint {
    pub depth: f64,
    pub kept: Proportion,
    pub survival: Proportion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbAnalysis {
    pub policy: PostselectionPolicy,
    pub points: Vec<RbDepthPoint>,
    pub erasure_fit: FitResult,
    pub survival_fit: FitResult,
    pub erasure_per_clifford: Estimate,
    pub residual_per_clifford: Estimate,
    pub erasure_per_x90: Estimate,
    pub residual_per_x90: Estimate,
    /// Erasure over residual error, None when the residual is not positive.
    pub bias: Option<Estimate>,
}

/// Fits the postselection probability to A·e^(−εN) and the postselected
/// survival to 1/2 + A·p^N with r = (1 − p)/2. Each Clifford holds two X90s,
/// so per-gate values are half the per-Clifford ones.
pub fn rb_analyze(records: &[ShotRecord], policy: PostselectionPolicy) -> Result<RbAnalysis> {
    let pts = curve(records, policy)?;
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "RB analysis needs at least 3 depths, got {}",
            pts.len()
        )));
    }
    let mut points = Vec::with_capacity(pts.len());
    for p in pts {
        let survival = p
            .success
            .ok_or_else(|| Error::InvalidArgument("RB records must carry expected bits".into()))?;
        if survival.trials == 0 {
            return Err(Error::Degenerate(format!(
                "no shots survive postselection at depth {}",
                p.x
            )));
        }
        points.push(RbDepthPoint {
            depth: p.x,
            kept: p.kept,
            survival,
        });
    }
    let n: Vec<f64> = points.iter().map(|p| p.depth).collect();
    let kept: Vec<f64> = points.iter().map(|p| p.kept.value).collect();
    let kept_s: Vec<f64> = points.iter().map(|p| p.kept.sigma()).collect();
    let surv: Vec<f64> = points.iter().map(|p| p.survival.value).collect();
    let surv_s: Vec<f64> = points.iter().map(|p| p.survival.sigma()).collect();
    let erasure_fit = fit_rb_erasure(&n, &kept, Some(&kept_s))?;
    let survival_fit = fit_rb_survival(&n, &surv, Some(&surv_s))?;
    let erasure = Estimate {
        value: erasure_fit.value("epsilon"),
        sigma: erasure_fit.sigma("epsilon"),
    };
    let residual = Estimate {
        value: 0.5 * (1.0 - survival_fit.value("p")),
        sigma: 0.5 * survival_fit.sigma("p"),
    };
    let bias = (residual.value > 0.0 && erasure.value > 0.0).then(|| {
        let b = erasure.value / residual.value;
        let rel = ((erasure.sigma / erasure.value).powi(2)
            + (residual.sigma / residual.value).powi(2))
        .sqrt();
        Estimate {
            value: b,
            sigma: b * rel,
        }
    });
    Ok(RbAnalysis {
        policy,
        points,
        erasure_fit,
        survival_fit,
        erasure_per_clifford: erasure,
        residual_per_clifford: residual,
        erasure_per_x90: erasure.half(),
        residual_per_x90: residual.half(),
        bias,
    })
}
