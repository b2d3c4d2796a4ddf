//! Time-dependent Hamiltonians built from a static part plus pulse and
//! noise-trace terms.

use std::sync::Arc;

use crate::dynamics::schedule::PulseSegment;
use crate::error::{Error, Result};
use crate::hilbert::{hermiticity_error, CMatrix, ModeSpace, C64};
use crate::noise::NoiseTrace;

#[derive(Clone, Debug)]
pub enum TermKind {
    /// c(t)·op + h.c. with c(t) = (A·env(t)/2)·e^{−i(ω t + φ)}.
    Drive(PulseSegment),
    /// A·env(t)·cos(ω t + φ)·op with op Hermitian.
    Modulation(PulseSegment),
    /// δω(t)·op with op Hermitian and δω a piecewise-constant trace.
    Trace(Arc<NoiseTrace>),
}

#[derive(Clone, Debug)]
pub struct Term {
    pub op: CMatrix,
    pub op_dag: CMatrix,
    pub kind: TermKind,
}

#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    pub space: Arc<ModeSpace>,
    pub h0: CMatrix,
    pub terms: Vec<Term>,
}

impl TimeDependentHamiltonian {
    pub fn new(space: Arc<ModeSpace>, h0: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if h0.nrows() != n || h0.ncols() != n {
            return Err(Error::DimensionMismatch(
                "static Hamiltonian does not match space".into(),
            ));
        }
        let scale = h0.iter().fold(1.0f64, |a, z| a.max(z.norm()));
        if hermiticity_error(&h0) > 1e-12 * scale {
            return Err(Error::InvalidArgument(
                "static Hamiltonian is not Hermitian".into(),
            ));
        }
        Ok(TimeDependentHamiltonian {
            space,
            h0,
            terms: Vec::new(),
        })
    }

    fn push(&mut self, op: CMatrix, kind: TermKind, hermitian: bool) -> Result<()> {
        let n = self.space.total_dim();
        if op.nrows() != n || op.ncols() != n {
            return Err(Error::DimensionMismatch(
                "term operator does not match space".into(),
            ));
        }
        if hermitian && hermiticity_error(&op) > 1e-12 {
            return Err(Error::InvalidArgument(
                "modulated operator must be Hermitian".into(),
            ));
        }
        let op_dag = op.adjoint();
        self.terms.push(Term { op, op_dag, kind });
        Ok(())
    }

    pub fn add_drive(&mut self, op: CMatrix, segment: PulseSegment) -> Result<()> {
        segment.validate()?;
        self.push(op, TermKind::Drive(segment), false)
    }

    pub fn add_modulation(&mut self, op: CMatrix, segment: PulseSegment) -> Result<()> {
        segment.validate()?;
        self.push(op, TermKind::Modulation(segment), true)
    }

    pub fn add_trace(&mut self, op: CMatrix, trace: Arc<NoiseTrace>) -> Result<()> {
        self.push(op, TermKind::Trace(trace), true)
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    /// Full Hamiltonian matrix at time t.
    pub fn at(&self, t: f64) -> CMatrix {
        let mut h = self.h0.clone();
        self.add_terms_at(t, &mut h);
        h
    }

    pub(crate) fn add_terms_at(&self, t: f64, h: &mut CMatrix) {
        for term in &self.terms {
            match &term.kind {
                TermKind::Drive(seg) => {
                    let env = seg.envelope_at(t);
                    if env == 0.0 {
                        continue;
                    }
                    let c =
                        C64::from_polar(0.5 * seg.amplitude * env, -(seg.carrier * t + seg.phase));
                    let cc = c.conj();
                    h.zip_zip_apply(&term.op, &term.op_dag, |hv, a, ad| *hv += c * a + cc * ad);
                }
                TermKind::Modulation(seg) => {
                    let env = seg.envelope_at(t);
                    if env == 0.0 {
                        continue;
                    }
                    let c = C64::from(seg.amplitude * env * (seg.carrier * t + seg.phase).cos());
                    h.zip_apply(&term.op, |hv, a| *hv += c * a);
                }
                TermKind::Trace(trace) => {
                    let c = C64::from(trace.value_at(t));
                    if c.re != 0.0 {
                        h.zip_apply(&term.op, |hv, a| *hv += c * a);
                    }
                }
            }
        }
    }

    /// Times in (t0, t1) where the Hamiltonian changes non-smoothly: segment
    /// edges and trace value changes.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        for term in &self.terms {
            match &term.kind {
                TermKind::Drive(seg) | TermKind::Modulation(seg) => {
                    for t in [seg.t_start, seg.t_end()] {
                        if t > t0 && t < t1 {
                            pts.push(t);
                        }
                    }
                }
                TermKind::Trace(trace) => {
                    let k0 = ((t0 / trace.dt).floor().max(0.0) as usize + 1).max(1);
                    let k1 =
                        ((t1 / trace.dt).ceil() as usize).min(trace.values.len().saturating_sub(1));
                    for k in k0..=k1 {
                        if k < trace.values.len() && trace.values[k] != trace.values[k - 1] {
                            let t = k as f64 * trace.dt;
                            if t > t0 && t < t1 {
                                pts.push(t);
                            }
                        }
                    }
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// True when no pulse term is active anywhere in (a, b), so H is constant
    /// there (given no trace change inside).
    pub fn is_static_on(&self, a: f64, b: f64) -> bool {
        self.terms.iter().all(|term| match &term.kind {
            TermKind::Drive(seg) | TermKind::Modulation(seg) => {
                seg.t_end() <= a || seg.t_start >= b
            }
            TermKind::Trace(_) => true,
        })
    }

    /// Latest time covered by every noise trace, if any traces are present.
    pub fn trace_coverage(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter_map(|t| match &t.kind {
                TermKind::Trace(tr) => Some(tr.duration()),
                _ => None,
            })
            .min_by(f64::total_cmp)
    }
}
