//! Levenberg–Marquardt least squares with analytic Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Model evaluated at `x`; writes ∂f/∂p into `grad` and returns f.
pub(crate) type Model<'a> = &'a dyn Fn(&[f64], f64, &mut [f64]) -> f64;

pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    /// (JᵀWJ)⁻¹ at the solution, not scaled by the residual variance.
    pub cov: DMatrix<f64>,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    /// Unweighted residual RMS.
    pub rms: f64,
}

const MAX_ITER: usize = 500;

fn residuals(
    model: Model,
    p: &[f64],
    x: &[f64],
    y: &[f64],
    w: &[f64],
    jac: Option<&mut DMatrix<f64>>,
) -> (DVector<f64>, f64) {
    let n = x.len();
    let mut r = DVector::zeros(n);
    let mut grad = vec![0.0; p.len()];
    let mut chi2 = 0.0;
    match jac {
        Some(j) => {
            for i in 0..n {
                let f = model(p, x[i], &mut grad);
                let sw = w[i].sqrt();
                r[i] = (y[i] - f) * sw;
                for (k, g) in grad.iter().enumerate() {
                    j[(i, k)] = g * sw;
                }
                chi2 += r[i] * r[i];
            }
        }
        None => {
            for i in 0..n {
                let f = model(p, x[i], &mut grad);
                r[i] = (y[i] - f) * w[i].sqrt();
                chi2 += r[i] * r[i];
            }
        }
    }
    (r, chi2)
}

/// Minimizes Σ wᵢ (yᵢ − f(xᵢ; p))² from `p0`. `clamp` is applied to every
/// trial point (box constraints by projection).
pub(crate) fn levenberg_marquardt(
    model: Model,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    p0: Vec<f64>,
    clamp: &dyn Fn(&mut [f64]),
) -> Result<LmOutcome> {
    let n = x.len();
    let m = p0.len();
    if n < m {
        return Err(Error::Degenerate(format!("{n} points for {m} parameters")));
    }
    if y.iter().chain(w).any(|v| !v.is_finite()) || w.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "data and weights must be finite, weights non-negative".into(),
        ));
    }
    let mut p = p0;
    clamp(&mut p);
    let mut jac = DMatrix::zeros(n, m);
    let (mut r, mut chi2) = residuals(model, &p, x, y, w, Some(&mut jac));
    // Floor for exact data, where χ² keeps shrinking towards rounding level.
    let floor = 1e-26 * y.iter().zip(w).map(|(v, wi)| wi * v * v).sum::<f64>() + 1e-300;
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let (_, c2) = residuals(model, &trial, x, y, w, None);
            if c2.is_finite() && c2 <= chi2 {
                // Step small in the metric of the normal matrix.
                let (mut dn, mut pn) = (0.0, 0.0);
                for k in 0..m {
                    let d = jtj[(k, k)].sqrt();
                    dn += (d * (trial[k] - p[k])).powi(2);
                    pn += (d * p[k]).powi(2);
                }
                let small_step = dn.sqrt() <= 1e-10 * pn.sqrt();
                let small_gain = chi2 - c2 <= 1e-9 * chi2 + floor;
                p = trial;
                let (r2, c2b) = residuals(model, &p, x, y, w, Some(&mut jac));
                r = r2;
                chi2 = c2b;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                converged = small_step || small_gain;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(format!(
            "no convergence after {MAX_ITER} iterations"
        )));
    }
    let jtj = jac.transpose() * &jac;
    let cov = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-300).ok())
        .ok_or_else(|| Error::Degenerate("singular normal matrix".into()))?;
    let mut grad = vec![0.0; m];
    let rms = (x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - model(&p, xi, &mut grad)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(LmOutcome {
        params: p,
        cov,
        chi2,
        rms,
    })
}
