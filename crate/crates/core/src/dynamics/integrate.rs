//! Dormand–Prince 5(4) integrator for matrix-valued ODEs.

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, C64};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-8,
            h_min: 1e-16,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(acc: &mut CMatrix, a: f64, x: &CMatrix) {
    let a = C64::from(a);
    acc.zip_apply(x, |y, xv| *y += a * xv);
}

fn lin(y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) -> CMatrix {
    let mut out = y.clone();
    for (c, k) in terms {
        axpy(&mut out, h * c, k);
    }
    out
}

/// One Dormand–Prince step of size h from (t, y) with k1 = f(t, y) given.
/// Returns (y_next, k7 = f(t+h, y_next), scaled error norm).
pub fn dopri_step<F>(
    f: &F,
    t: f64,
    y: &CMatrix,
    k1: &CMatrix,
    h: f64,
    opts: &OdeOptions,
) -> (CMatrix, CMatrix, f64)
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    let k2 = f(t + C2 * h, &lin(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &lin(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &lin(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &lin(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &lin(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = lin(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = f(t + h, &y_new);
    let mut err = CMatrix::zeros(y.nrows(), y.ncols());
    for (c, k) in [
        (E1, k1),
        (E3, &k3),
        (E4, &k4),
        (E5, &k5),
        (E6, &k6),
        (E7, &k7),
    ] {
        axpy(&mut err, h * c, k);
    }
    let mut norm = 0.0f64;
    for ((e, a), b) in err.iter().zip(y.iter()).zip(y_new.iter()) {
        let scale = opts.atol + opts.rtol * a.norm().max(b.norm());
        norm = norm.max(e.norm() / scale);
    }
    (y_new, k7, norm)
}

/// Outcome of a step observer: keep integrating or stop at the current step.
pub enum StepControl {
    Continue,
    Stop,
}

/// Integrates y' = f(t, y) from t0 to t1. `h_hint` carries the step size
/// between calls. `observer` sees every accepted step as
/// (t_prev, y_prev, k_prev, t_new, y_new) and may stop integration; in that
/// case the returned time is the end of the stopping step.
pub fn integrate_observed<F, O>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: CMatrix,
    opts: &OdeOptions,
    h_hint: &mut f64,
    mut observer: O,
) -> Result<(f64, CMatrix)>
where
    F: Fn(f64, &CMatrix) -> CMatrix,
    O: FnMut(f64, &CMatrix, &CMatrix, f64, &CMatrix) -> StepControl,
{
    let span = t1 - t0;
    if span < 0.0 {
        return Err(Error::Integrator("integration interval is reversed".into()));
    }
    if span == 0.0 {
        return Ok((t1, y0));
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = if *h_hint > 0.0 {
        h_hint.min(span)
    } else {
        span.min(1e-3 * span.max(1e-12)).max(span * 1e-3)
    };
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integrator("maximum number of steps exceeded".into()));
        }
        let remaining = t1 - t;
        let last = h >= remaining * (1.0 - 1e-12);
        let h_try = if last { remaining } else { h.min(opts.h_max) };
        let (y_new, k7, err) = dopri_step(f, t, &y, &k1, h_try, opts);
        if !err.is_finite() {
            h = h_try * 0.1;
            if h < opts.h_min {
                return Err(Error::Integrator("non-finite error estimate".into()));
            }
            continue;
        }
        if err <= 1.0 {
            let t_new = if last { t1 } else { t + h_try };
            let control = observer(t, &y, &k1, t_new, &y_new);
            t = t_new;
            y = y_new;
            k1 = k7;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !last {
                h = h_try * factor;
                *h_hint = h;
            } else {
                *h_hint = (h_try * factor).max(*h_hint);
            }
            if let StepControl::Stop = control {
                return Ok((t, y));
            }
        } else {
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h < opts.h_min {
                return Err(Error::Integrator(format!(
                    "step size {h:.3e} below minimum at t = {t:.6e}"
                )));
            }
        }
    }
    Ok((t, y))
}

pub fn integrate<F>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: CMatrix,
    opts: &OdeOptions,
    h_hint: &mut f64,
) -> Result<CMatrix>
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    integrate_observed(f, t0, t1, y0, opts, h_hint, |_, _, _, _, _| {
        StepControl::Continue
    })
    .map(|r| r.1)
}

/// Classical fourth-order Runge–Kutta with fixed step count.
pub fn rk4_fixed<F>(f: &F, t0: f64, t1: f64, y0: CMatrix, n_steps: usize) -> CMatrix
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    let h = (t1 - t0) / n_steps.max(1) as f64;
    let mut y = y0;
    let mut t = t0;
    for _ in 0..n_steps.max(1) {
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &lin(&y, h, &[(0.5, &k1)]));
        let k3 = f(t + 0.5 * h, &lin(&y, h, &[(0.5, &k2)]));
        let k4 = f(t + h, &lin(&y, h, &[(1.0, &k3)]));
        y = lin(
            &y,
            h,
            &[
                (1.0 / 6.0, &k1),
                (1.0 / 3.0, &k2),
                (1.0 / 3.0, &k3),
                (1.0 / 6.0, &k4),
            ],
        );
        t += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let f = |_t: f64, y: &CMatrix| y * C64::new(-1.0, 2.0);
        let y0 = CMatrix::from_element(1, 1, C64::from(1.0));
        let mut h = 0.0;
        let y = integrate(&f, 0.0, 3.0, y0, &OdeOptions::default(), &mut h).unwrap();
        let exact = (C64::new(-1.0, 2.0) * 3.0).exp();
        assert!((y[(0, 0)] - exact).norm() < 1e-7);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos(t) y → y = exp(sin t).
        let f = |t: f64, y: &CMatrix| y * C64::from(t.cos());
        let y0 = CMatrix::from_element(1, 1, C64::from(1.0));
        let mut h = 0.0;
        let y = integrate(&f, 0.0, 10.0, y0.clone(), &OdeOptions::default(), &mut h).unwrap();
        assert!((y[(0, 0)].re - 10f64.sin().exp()).abs() < 1e-7);
        let y4 = rk4_fixed(&f, 0.0, 10.0, y0, 2000);
        assert!((y4[(0, 0)].re - 10f64.sin().exp()).abs() < 1e-9);
    }
}
