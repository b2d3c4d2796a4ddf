//! Lindblad master-equation integration.

use crate::dynamics::hamiltonian::TimeDependentHamiltonian;
use crate::dynamics::integrate::{integrate, OdeOptions};
use crate::dynamics::record::CollapseChannel;
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, QuantumState, StateRepr, C64, I};

/// Precomputed dissipator pieces: √rate·L and Σ rate·L†L.
pub(crate) struct Dissipator {
    pub ops: Vec<CMatrix>,
    pub ops_dag: Vec<CMatrix>,
    pub decay: CMatrix,
}

impl Dissipator {
    pub fn new(dim: usize, channels: &[CollapseChannel]) -> Result<Self> {
        let mut ops = Vec::new();
        let mut ops_dag = Vec::new();
        let mut decay = CMatrix::zeros(dim, dim);
        for ch in channels {
            if ch.operator.matrix().nrows() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "collapse operator {:?} does not match space",
                    ch.label
                )));
            }
            if ch.rate == 0.0 {
                continue;
            }
            let l = ch.operator.matrix() * C64::from(ch.rate.sqrt());
            let ld = l.adjoint();
            decay += &ld * &l;
            ops.push(l);
            ops_dag.push(ld);
        }
        Ok(Dissipator {
            ops,
            ops_dag,
            decay,
        })
    }

    /// H_eff = H − (i/2) Σ L†L.
    pub fn effective(&self, h: &CMatrix) -> CMatrix {
        h - &self.decay * C64::new(0.0, 0.5)
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::EmptyInput("time grid is empty".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "time grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Integrates the master equation from `rho0` at `t_grid[0]`, returning the
/// state at every grid time (the first entry is `rho0` itself).
pub fn lindblad_evolve(
    h: &TimeDependentHamiltonian,
    channels: &[CollapseChannel],
    rho0: &QuantumState,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<QuantumState>> {
    check_grid(t_grid)?;
    let rho = match rho0.repr() {
        StateRepr::Density(r) => r.clone(),
        StateRepr::Pure(_) => {
            return Err(Error::InvalidState(
                "lindblad_evolve needs a density matrix".into(),
            ))
        }
    };
    if rho0.space() != &h.space {
        return Err(Error::DimensionMismatch(
            "state and Hamiltonian spaces differ".into(),
        ));
    }
    let diss = Dissipator::new(h.dim(), channels)?;
    let rhs = |t: f64, rho: &CMatrix| {
        let h_eff = diss.effective(&h.at(t));
        let mut out = (&h_eff * rho - rho * h_eff.adjoint()) * (-I);
        for (l, ld) in diss.ops.iter().zip(&diss.ops_dag) {
            out += l * rho * ld;
        }
        out
    };
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(rho0.clone());
    let mut current = rho;
    let mut h_hint = 0.0;
    for w in t_grid.windows(2) {
        let mut cuts = vec![w[0]];
        cuts.extend(h.breakpoints(w[0], w[1]));
        cuts.push(w[1]);
        for c in cuts.windows(2) {
            current = integrate(&rhs, c[0], c[1], current, opts, &mut h_hint)?;
        }
        let state = QuantumState::density_unchecked(h.space.clone(), current.clone());
        let tr = state.trace();
        if (tr - 1.0).abs() > 1e-6 {
            return Err(Error::Integrator(format!(
                "trace drifted to {tr} at t = {}",
                w[1]
            )));
        }
        out.push(state);
    }
    Ok(out)
}
