//! Curve fits with deterministic initial guesses.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::analysis::lm::{levenberg_marquardt, LmOutcome};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// A·e^(−t/T) + c with c fixed.
    ExpDecay,
    ExpDecayFreeOffset,
    /// c + A·cos(φ − φ0).
    Sinusoid,
    /// c + A·e^(−t/T)·cos(ωt + φ).
    DampedOscillation,
    /// 1/2 + A·p^N.
    RbSurvival,
    /// A·e^(−εN).
    RbErasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<FitParam>,
    pub residual_rms: f64,
    pub n_points: usize,
    /// Set when the fit is formally valid but uninformative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of a parameter that the model is known to have.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.sigma)
    }
}

/// Offset handling for exponential fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offset {
    Fixed(f64),
    Free,
}

fn param(name: &str, value: f64, sigma: f64) -> FitParam {
    FitParam {
        name: name.to_string(),
        value,
        sigma,
    }
}

fn check_xy(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} abscissae for {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::Degenerate(format!(
            "need at least {min} points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite data".into()));
    }
    Ok(())
}

fn weights(sigma: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match sigma {
        None => Ok(vec![1.0; n]),
        Some(s) if s.len() != n => Err(Error::DimensionMismatch("sigma length".into())),
        Some(s) => s
            .iter()
            .map(|&v| {
                if v > 0.0 && v.is_finite() {
                    Ok(1.0 / (v * v))
                } else {
                    Err(Error::InvalidArgument("sigma must be positive".into()))
                }
            })
            .collect(),
    }
}

/// Parameter standard errors. With absolute sigmas the covariance is used
/// as is unless the reduced χ² exceeds one; without sigmas it is scaled by
/// the residual variance.
fn std_errors(out: &LmOutcome, n: usize, absolute: bool) -> Vec<f64> {
    let m = out.params.len();
    let dof = n.saturating_sub(m).max(1) as f64;
    let red = out.chi2 / dof;
    let scale = if absolute { red.max(1.0) } else { red };
    (0..m)
        .map(|k| (out.cov[(k, k)] * scale).max(0.0).sqrt())
        .collect()
}

/// Slope and intercept of an ordinary least-squares line.
fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn is_constant(y: &[f64]) -> bool {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs()))
}

/// Log-linear guess (A, k) for y ≈ c + A·e^(−k t).
fn exp_guess(t: &[f64], y: &[f64], c: f64) -> (f64, f64) {
    let sign = if y[0] - c >= 0.0 { 1.0 } else { -1.0 };
    let (tt, ll): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| sign * (v - c) > 0.0)
        .map(|(&a, &v)| (a, (sign * (v - c)).ln()))
        .unzip();
    let span = t[t.len() - 1] - t[0];
    match linear_regression(&tt, &ll) {
        Some((slope, icpt)) if slope < 0.0 => (sign * icpt.exp(), -slope),
        _ => (y[0] - c, 1.0 / span.max(1e-300)),
    }
}

/// y = A·e^(−t/T) + c.
pub fn fit_exponential(t: &[f64], y: &[f64], offset: Offset) -> Result<FitResult> {
    fit_exponential_weighted(t, y, None, offset)
}

pub fn fit_exponential_weighted(
    t: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    offset: Offset,
) -> Result<FitResult> {
    check_xy(t, y, 3)?;
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "abscissae must be strictly increasing".into(),
        ));
    }
    if is_constant(y) {
        return Err(Error::Degenerate("constant data has no decay".into()));
    }
    let w = weights(sigma, t.len())?;
    // Times are rescaled so the rate parameter is of order one.
    let ts = t[t.len() - 1].abs().max(1e-300);
    let tn: Vec<f64> = t.iter().map(|v| v / ts).collect();
    let (out, names): (LmOutcome, Vec<&str>) = match offset {
        Offset::Fixed(c) => {
            let (a0, k0) = exp_guess(&tn, y, c);
            let model = move |p: &[f64], x: f64, g: &mut [f64]| {
                let e = (-p[1] * x).exp();
                g[0] = e;
                g[1] = -p[0] * x * e;
                p[0] * e + c
            };
            (
                levenberg_marquardt(&model, &tn, y, &w, vec![a0, k0], &|_| {})?,
                vec!["amplitude", "rate"],
            )
        }
        Offset::Free => {
            let last = y[y.len() - 1];
            let c0 = last - 0.1 * (y[0] - last);
            let (a0, k0) = exp_guess(&tn, y, c0);
            let model = |p: &[f64], x: f64, g: &mut [f64]| {
                let e = (-p[1] * x).exp();
                g[0] = e;
                g[1] = -p[0] * x * e;
                g[2] = 1.0;
                p[0] * e + p[2]
            };
            (
                levenberg_marquardt(&model, &tn, y, &w, vec![a0, k0, c0], &|_| {})?,
                vec!["amplitude", "rate", "offset"],
            )
        }
    };
    let se = std_errors(&out, t.len(), sigma.is_some());
    let k = out.params[1] / ts;
    let sk = se[1] / ts;
    let mut params = vec![param(names[0], out.params[0], se[0])];
    params.push(param("tau", 1.0 / k, sk / (k * k)));
    params.push(param("rate", k, sk));
    match offset {
        Offset::Fixed(c) => params.push(param("offset", c, 0.0)),
        Offset::Free => params.push(param("offset", out.params[2], se[2])),
    }
    let flag = (k <= 0.0).then(|| "non-decaying".to_string());
    let model = if matches!(offset, Offset::Fixed(_)) {
        FitModel::ExpDecay
    } else {
        FitModel::ExpDecayFreeOffset
    };
    Ok(FitResult {
        model,
        params,
        residual_rms: out.rms,
        n_points: t.len(),
        flag,
    })
}

/// Solves the linear problem y = c + a·cos(ωx) + b·sin(ωx); returns
/// ((c, a, b), residual sum of squares, (XᵀX)⁻¹).
fn linear_sinusoid(
    x: &[f64],
    y: &[f64],
    omega: f64,
) -> Option<([f64; 3], f64, nalgebra::Matrix3<f64>)> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let row = nalgebra::Vector3::new(1.0, (omega * xi).cos(), (omega * xi).sin());
        ata += row * row.transpose();
        aty += row * yi;
    }
    let inv = ata.try_inverse()?;
    let sol = inv * aty;
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            (yi - sol[0] - sol[1] * (omega * xi).cos() - sol[2] * (omega * xi).sin()).powi(2)
        })
        .sum();
    Some(([sol[0], sol[1], sol[2]], rss, inv))
}

/// y = c + A·cos(φ − φ0) with A ≥ 0 and φ0 in (−π, π]. The problem is
/// linear in (c, A cos φ0, A sin φ0), so the solution is exact.
pub fn fit_fringe(phase: &[f64], y: &[f64]) -> Result<FitResult> {
    check_xy(phase, y, 4)?;
    let lo = phase.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < PI - 1e-12 {
        return Err(Error::Degenerate(
            "fringe phases must span at least π".into(),
        ));
    }
    let ([c, a, b], rss, inv) = linear_sinusoid(phase, y, 1.0)
        .ok_or_else(|| Error::Degenerate("fringe phases are not independent".into()))?;
    let n = phase.len();
    let var = rss / (n - 3).max(1) as f64;
    let amp = a.hypot(b);
    let scale = 1e-12 * (1.0 + c.abs());
    let (phi0, s_amp, s_phi, flag) = if amp <= scale {
        (
            0.0,
            (inv[(1, 1)] * var).sqrt(),
            f64::INFINITY,
            Some("no fringe".to_string()),
        )
    } else {
        let phi0 = b.atan2(a);
        // Gradients of A and φ0 with respect to (a, b).
        let ga = [a / amp, b / amp];
        let gp = [-b / (amp * amp), a / (amp * amp)];
        let quad = |g: [f64; 2]| {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += g[i] * g[j] * inv[(i + 1, j + 1)];
                }
            }
            (s * var).max(0.0).sqrt()
        };
        (phi0, quad(ga), quad(gp), None)
    };
    Ok(FitResult {
        model: FitModel::Sinusoid,
        params: vec![
            param("amplitude", amp, s_amp),
            param("phase", phi0, s_phi),
            param("mean", c, (inv[(0, 0)] * var).max(0.0).sqrt()),
        ],
        residual_rms: (rss / n as f64).sqrt(),
        n_points: n,
        flag,
    })
}

/// Fringe coherence: peak-to-peak amplitude of the fitted sinusoid.
pub fn fringe_coherence(fit: &FitResult) -> f64 {
    2.0 * fit.value("amplitude")
}

/// y = c + A·e^(−t/T)·cos(ωt + φ), ω ≥ 0. The starting frequency is the
/// best single-tone least-squares fit on a grid up to the Nyquist rate of
/// the smallest spacing.
pub fn fit_damped_oscillation(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_xy(t, y, 6)?;
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "abscissae must be strictly increasing".into(),
        ));
    }
    if is_constant(y) {
        return Err(Error::Degenerate("constant data has no oscillation".into()));
    }
    let ts = t[t.len() - 1] - t[0];
    let tn: Vec<f64> = t.iter().map(|v| (v - t[0]) / ts).collect();
    let dmin = tn
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let w_max = PI / dmin;
    let n_grid = 40 * t.len();
    let mut best = (f64::INFINITY, 0.0, [0.0; 3]);
    for k in 1..=n_grid {
        let w = w_max * k as f64 / n_grid as f64;
        if let Some((sol, rss, _)) = linear_sinusoid(&tn, y, w) {
            if rss < best.0 {
                best = (rss, w, sol);
            }
        }
    }
    let (_, w0, [c0, a, b]) = best;
    let model = |p: &[f64], x: f64, g: &mut [f64]| {
        let e = (-p[4] * x).exp();
        let (s, co) = (p[2] * x + p[3]).sin_cos();
        g[0] = 1.0;
        g[1] = e * co;
        g[2] = -p[1] * e * x * s;
        g[3] = -p[1] * e * s;
        g[4] = -x * p[1] * e * co;
        p[0] + p[1] * e * co
    };
    let w = vec![1.0; t.len()];
    let p0 = vec![c0, a.hypot(b), w0, (-b).atan2(a), 0.0];
    let out = levenberg_marquardt(&model, &tn, y, &w, p0, &|p| {
        if p[4] < 0.0 {
            p[4] = 0.0;
        }
    })?;
    let se = std_errors(&out, t.len(), false);
    let mut p = out.params.clone();
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    let phase = (p[3] + PI).rem_euclid(TAU) - PI - p[2] * t[0] / ts;
    let k = p[4] / ts;
    Ok(FitResult {
        model: FitModel::DampedOscillation,
        params: vec![
            param("mean", p[0], se[0]),
            param("amplitude", p[1], se[1]),
            param("frequency", p[2] / ts, se[2] / ts),
            param("phase", (phase + PI).rem_euclid(TAU) - PI, se[3]),
            param("rate", k, se[4] / ts),
        ],
        residual_rms: out.rms,
        n_points: t.len(),
        flag: None,
    })
}

/// y = 1/2 + A·p^N, weighted by `sigma` when given.
pub fn fit_rb_survival(n: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_xy(n, y, 3)?;
    let w = weights(sigma, n.len())?;
    let (a0, k0) = {
        let (tt, ll): (Vec<f64>, Vec<f64>) = n
            .iter()
            .zip(y)
            .filter(|(_, &v)| v > 0.5)
            .map(|(&a, &v)| (a, (v - 0.5).ln()))
            .unzip();
        match linear_regression(&tt, &ll) {
            Some((s, i)) if s < 0.0 => (i.exp(), -s),
            _ => (0.5, 0.0),
        }
    };
    let model = |p: &[f64], x: f64, g: &mut [f64]| {
        let e = p[1].powf(x);
        g[0] = e;
        g[1] = if x == 0.0 {
            0.0
        } else {
            p[0] * x * p[1].powf(x - 1.0)
        };
        0.5 + p[0] * e
    };
    let out = levenberg_marquardt(&model, n, y, &w, vec![a0, (-k0).exp()], &|p| {
        p[1] = p[1].clamp(1e-9, 1.0 + 1e-3);
    })?;
    let se = std_errors(&out, n.len(), sigma.is_some());
    Ok(FitResult {
        model: FitModel::RbSurvival,
        params: vec![
            param("amplitude", out.params[0], se[0]),
            param("p", out.params[1], se[1]),
        ],
        residual_rms: out.rms,
        n_points: n.len(),
        flag: None,
    })
}

/// y = A·e^(−εN), weighted by `sigma` when given.
pub fn fit_rb_erasure(n: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_xy(n, y, 3)?;
    let w = weights(sigma, n.len())?;
    let (a0, e0) = {
        let (tt, ll): (Vec<f64>, Vec<f64>) = n
            .iter()
            .zip(y)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&a, &v)| (a, v.ln()))
            .unzip();
        match linear_regression(&tt, &ll) {
            Some((s, i)) => (i.exp(), -s),
            None => (1.0, 0.0),
        }
    };
    let model = |p: &[f64], x: f64, g: &mut [f64]| {
        let e = (-p[1] * x).exp();
        g[0] = e;
        g[1] = -p[0] * x * e;
        p[0] * e
    };
    let out = levenberg_marquardt(&model, n, y, &w, vec![a0, e0], &|_| {})?;
    let se = std_errors(&out, n.len(), sigma.is_some());
    Ok(FitResult {
        model: FitModel::RbErasure,
        params: vec![
            param("amplitude", out.params[0], se[0]),
            param("epsilon", out.params[1], se[1]),
        ],
        residual_rms: out.rms,
        n_points: n.len(),
        flag: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Binomial, Distribution, Normal};

    #[test]
    fn exact_exponential_recovered() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 5e-6).collect();
        let y: Vec<f64> = t.iter().map(|v| (-v / 30e-6).exp()).collect();
        let f = fit_exponential(&t, &y, Offset::Fixed(0.0)).unwrap();
        assert!((f.value("tau") / 30e-6 - 1.0).abs() < 1e-6);
        assert!(f.sigma("tau") / 30e-6 < 0.01);
        let f = fit_exponential(&t, &y, Offset::Free).unwrap();
        assert!((f.value("tau") / 30e-6 - 1.0).abs() < 1e-6);
        assert!(f.value("offset").abs() < 1e-8);
    }

    #[test]
    fn decay_to_half_recovers_step_survival() {
        let p = 0.995f64;
        let n: Vec<f64> = (0..12).map(|k| (k * 40) as f64).collect();
        let y: Vec<f64> = n.iter().map(|&k| 0.5 + 0.45 * p.powf(k)).collect();
        let f = fit_exponential(&n, &y, Offset::Fixed(0.5)).unwrap();
        assert!(((-1.0 / f.value("tau")).exp() - p).abs() < 1e-9);
        let g = fit_rb_survival(&n, &y, None).unwrap();
        assert!((g.value("p") - p).abs() < 1e-9);
    }

    #[test]
    fn exponential_interval_coverage() {
        // 10³-shot binomial data plus σ = 0.01 Gaussian noise.
        let t: Vec<f64> = (0..15).map(|k| k as f64 * 6e-6).collect();
        let truth = 30e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gauss = Normal::new(0.0, 0.01).unwrap();
        let mut covered = 0;
        for _ in 0..100 {
            let y: Vec<f64> = t
                .iter()
                .map(|v| {
                    let p = (-v / truth).exp();
                    Binomial::new(1000, p).unwrap().sample(&mut rng) as f64 / 1000.0
                        + gauss.sample(&mut rng)
                })
                .collect();
            let f = fit_exponential(&t, &y, Offset::Fixed(0.0)).unwrap();
            if (f.value("tau") - truth).abs() <= 2.0 * f.sigma("tau") {
                covered += 1;
            }
        }
        assert!(covered >= 93, "coverage {covered}/100");
    }

    #[test]
    fn constant_data_is_degenerate() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            fit_exponential(&t, &[0.3; 4], Offset::Free),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fringe_cases() {
        let phi: Vec<f64> = (0..12).map(|k| k as f64 * TAU / 12.0).collect();
        let y: Vec<f64> = phi.iter().map(|p| 0.5 + 0.5 * p.cos()).collect();
        let f = fit_fringe(&phi, &y).unwrap();
        assert!((f.value("amplitude") - 0.5).abs() < 1e-12 && f.value("phase").abs() < 1e-12);
        assert!((fringe_coherence(&f) - 1.0).abs() < 1e-12);

        let y: Vec<f64> = phi
            .iter()
            .map(|p| 0.5 + 0.3 * (p - PI / 3.0).cos())
            .collect();
        let f = fit_fringe(&phi, &y).unwrap();
        assert!((f.value("phase") - PI / 3.0).abs() < 0.01);

        let f = fit_fringe(&phi, &[0.4; 12]).unwrap();
        assert!(f.value("amplitude") < 1e-12 && f.flag.is_some());

        assert!(fit_fringe(&[0.0, 0.5, 1.0, 1.5], &[0.0; 4]).is_err());
    }

    #[test]
    fn oscillation_frequency() {
        let w = TAU * 1.3e6;
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 40e-9).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|v| 0.5 + 0.4 * (-v / 2e-6).exp() * (w * v + 0.3).cos())
            .collect();
        let f = fit_damped_oscillation(&t, &y).unwrap();
        assert!((f.value("frequency") / w - 1.0).abs() < 1e-6);
        assert!((f.value("rate") * 2e-6 - 1.0).abs() < 1e-5);
        assert!((f.value("phase") - 0.3).abs() < 1e-6);
    }

    #[test]
    fn rb_erasure_fit_with_flat_data() {
        let n = [2.0, 32.0, 128.0, 400.0];
        let f = fit_rb_erasure(&n, &[1.0; 4], Some(&[1e-3; 4])).unwrap();
        assert!(f.value("epsilon").abs() < 1e-12);
        let g = fit_rb_survival(&n, &[1.0; 4], Some(&[1e-3; 4])).unwrap();
        assert!((1.0 - g.value("p")).abs() < 1e-9);
    }
}
