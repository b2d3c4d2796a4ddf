//! Truncated tensor-product Hilbert spaces, operators and states.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances used by validation checks.
pub mod tol {
    /// Max elementwise |M - M†| for an operator flagged Hermitian.
    pub const HERMITIAN: f64 = 1e-12;
    /// Allowed deviation of a pure state's norm from one.
    pub const PURE_NORM: f64 = 1e-9;
    /// Trace, Hermiticity and positivity slack for density matrices.
    pub const DENSITY: f64 = 1e-9;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Transmon1,
    Transmon2,
    Ancilla,
    Resonator,
    Tls,
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModeLabel::Transmon1 => "transmon1",
            ModeLabel::Transmon2 => "transmon2",
            ModeLabel::Ancilla => "ancilla",
            ModeLabel::Resonator => "resonator",
            ModeLabel::Tls => "tls",
        };
        f.write_str(s)
    }
}

/// Ordered list of truncated modes. Basis index is row-major with mode 0 the
/// most significant digit, matching `kron(op_0, kron(op_1, ...))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSpace {
    dims: Vec<usize>,
    labels: Vec<ModeLabel>,
}

impl ModeSpace {
    pub fn new(modes: &[(ModeLabel, usize)]) -> Result<Arc<Self>> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument(
                "mode space needs at least one mode".into(),
            ));
        }
        for (label, dim) in modes {
            if *dim < 2 {
                return Err(Error::DimensionMismatch(format!(
                    "mode {label} has dimension {dim} < 2"
                )));
            }
            if *label == ModeLabel::Tls && *dim != 2 {
                return Err(Error::DimensionMismatch(format!(
                    "tls mode must have dimension 2, got {dim}"
                )));
            }
        }
        Ok(Arc::new(ModeSpace {
            dims: modes.iter().map(|m| m.1).collect(),
            labels: modes.iter().map(|m| m.0).collect(),
        }))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Index of the first mode carrying `label`.
    pub fn find(&self, label: ModeLabel) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }

    pub fn basis_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} occupation numbers, got {}",
                self.dims.len(),
                levels.len()
            )));
        }
        let mut idx = 0;
        for (&n, &d) in levels.iter().zip(&self.dims) {
            if n >= d {
                return Err(Error::DimensionMismatch(format!(
                    "level {n} exceeds truncation {d}"
                )));
            }
            idx = idx * d + n;
        }
        Ok(idx)
    }

    pub fn levels(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            out[k] = index % d;
            index /= d;
        }
        out
    }

    /// Embeds a single-mode matrix on `mode` with identities elsewhere.
    pub fn embed(&self, mode: usize, local: &CMatrix) -> Result<CMatrix> {
        if mode >= self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "mode index {mode} out of range"
            )));
        }
        if local.nrows() != self.dims[mode] || local.ncols() != self.dims[mode] {
            return Err(Error::DimensionMismatch(
                "local operator does not match mode dimension".into(),
            ));
        }
        let mut out = CMatrix::identity(1, 1);
        for (k, &d) in self.dims.iter().enumerate() {
            let factor = if k == mode {
                local.clone()
            } else {
                CMatrix::identity(d, d)
            };
            out = out.kronecker(&factor);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Lower,
    Raise,
    Number,
    SigmaMinus,
    SigmaZ,
}

/// Dense operator tied to a mode space.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    matrix: CMatrix,
    space: Arc<ModeSpace>,
    hermitian: bool,
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

impl LinearOperator {
    pub fn new(space: Arc<ModeSpace>, matrix: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, space dimension is {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(LinearOperator {
            matrix,
            space,
            hermitian: false,
        })
    }

    /// Constructs an operator flagged Hermitian after verifying it.
    pub fn hermitian(space: Arc<ModeSpace>, matrix: CMatrix) -> Result<Self> {
        let err = hermiticity_error(&matrix);
        if err > tol::HERMITIAN * max_abs(&matrix).max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "matrix not Hermitian (max |M-M†| = {err:.3e})"
            )));
        }
        let mut op = Self::new(space, matrix)?;
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(space: Arc<ModeSpace>) -> Self {
        let n = space.total_dim();
        LinearOperator {
            matrix: CMatrix::identity(n, n),
            space,
            hermitian: true,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn space(&self) -> &Arc<ModeSpace> {
        &self.space
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dagger(&self) -> Self {
        LinearOperator {
            matrix: self.matrix.adjoint(),
            space: self.space.clone(),
            hermitian: self.hermitian,
        }
    }

    fn check_space(&self, other: &LinearOperator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch(
                "operators live on different spaces".into(),
            ));
        }
        Ok(())
    }

    pub fn mul(&self, other: &LinearOperator) -> Result<Self> {
        self.check_space(other)?;
        Ok(LinearOperator {
            matrix: &self.matrix * &other.matrix,
            space: self.space.clone(),
            hermitian: false,
        })
    }

    pub fn add(&self, other: &LinearOperator) -> Result<Self> {
        self.check_space(other)?;
        Ok(LinearOperator {
            matrix: &self.matrix + &other.matrix,
            space: self.space.clone(),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        LinearOperator {
            matrix: &self.matrix * C64::from(c),
            space: self.space.clone(),
            hermitian: self.hermitian,
        }
    }

    pub fn commutator(&self, other: &LinearOperator) -> Result<Self> {
        self.check_space(other)?;
        Ok(LinearOperator {
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            space: self.space.clone(),
            hermitian: false,
        })
    }
}

pub fn lowering_matrix(dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    m
}

pub fn mode_operator(
    space: &Arc<ModeSpace>,
    mode_index: usize,
    kind: OperatorKind,
) -> Result<LinearOperator> {
    if mode_index >= space.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "mode index {mode_index} out of range for {} modes",
            space.n_modes()
        )));
    }
    let d = space.dims()[mode_index];
    let local = match kind {
        OperatorKind::Lower => lowering_matrix(d),
        OperatorKind::Raise => lowering_matrix(d).adjoint(),
        OperatorKind::Number => {
            CMatrix::from_diagonal(&CVector::from_fn(d, |n, _| C64::from(n as f64)))
        }
        OperatorKind::SigmaMinus | OperatorKind::SigmaZ if d != 2 => {
            return Err(Error::DimensionMismatch(format!(
                "sigma operator on mode of dimension {d}"
            )));
        }
        OperatorKind::SigmaMinus => lowering_matrix(2),
        // Index 0 is the ground state, so sigma_z = |e><e| - |g><g|.
        OperatorKind::SigmaZ => CMatrix::from_diagonal(&CVector::from_vec(vec![-ONE, ONE])),
    };
    let matrix = space.embed(mode_index, &local)?;
    let mut op = LinearOperator::new(space.clone(), matrix)?;
    op.hermitian = matches!(kind, OperatorKind::Number | OperatorKind::SigmaZ);
    Ok(op)
}

#[derive(Clone, Debug)]
pub enum StateRepr {
    Pure(CVector),
    Density(CMatrix),
}

#[derive(Clone, Debug)]
pub struct QuantumState {
    repr: StateRepr,
    space: Arc<ModeSpace>,
}

impl QuantumState {
    pub fn pure(space: Arc<ModeSpace>, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(
                "state vector length does not match space".into(),
            ));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > tol::PURE_NORM {
            return Err(Error::InvalidState(format!(
                "pure state norm {norm} differs from 1"
            )));
        }
        Ok(QuantumState {
            repr: StateRepr::Pure(amplitudes),
            space,
        })
    }

    /// Normalizes the vector before constructing the state.
    pub fn pure_normalized(space: Arc<ModeSpace>, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize zero vector".into()));
        }
        Self::pure(space, amplitudes / C64::from(norm))
    }

    pub fn density(space: Arc<ModeSpace>, rho: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DimensionMismatch(
                "density matrix does not match space".into(),
            ));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > tol::DENSITY || tr.im.abs() > tol::DENSITY {
            return Err(Error::InvalidState(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        if hermiticity_error(&rho) > tol::DENSITY {
            return Err(Error::InvalidState("density matrix not Hermitian".into()));
        }
        let min_eig = min_eigenvalue(&rho);
        if min_eig < -tol::DENSITY {
            return Err(Error::InvalidState(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(QuantumState {
            repr: StateRepr::Density(rho),
            space,
        })
    }

    /// Wraps a density matrix that is known to be valid up to integration error,
    /// symmetrizing it first.
    pub(crate) fn density_unchecked(space: Arc<ModeSpace>, rho: CMatrix) -> Self {
        let sym = (&rho + rho.adjoint()) * C64::from(0.5);
        QuantumState {
            repr: StateRepr::Density(sym),
            space,
        }
    }

    pub fn fock(space: &Arc<ModeSpace>, levels: &[usize]) -> Result<Self> {
        let idx = space.basis_index(levels)?;
        let mut v = CVector::zeros(space.total_dim());
        v[idx] = ONE;
        Ok(QuantumState {
            repr: StateRepr::Pure(v),
            space: space.clone(),
        })
    }

    pub fn space(&self) -> &Arc<ModeSpace> {
        &self.space
    }

    pub fn repr(&self) -> &StateRepr {
        &self.repr
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, StateRepr::Pure(_))
    }

    pub fn to_density_matrix(&self) -> CMatrix {
        match &self.repr {
            StateRepr::Pure(v) => v * v.adjoint(),
            StateRepr::Density(r) => r.clone(),
        }
    }

    pub fn to_density(&self) -> Self {
        QuantumState {
            repr: StateRepr::Density(self.to_density_matrix()),
            space: self.space.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.repr {
            StateRepr::Pure(v) => v.norm_squared(),
            StateRepr::Density(r) => r.trace().re,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match &self.repr {
            StateRepr::Pure(_) => 0.0,
            StateRepr::Density(r) => min_eigenvalue(r),
        }
    }

    /// Fidelity with a pure target: ⟨φ|ρ|φ⟩.
    pub fn fidelity_with_pure(&self, target: &CVector) -> Result<f64> {
        if target.len() != self.space.total_dim() {
            return Err(Error::DimensionMismatch(
                "target vector length does not match space".into(),
            ));
        }
        Ok(match &self.repr {
            StateRepr::Pure(v) => target.dotc(v).norm_sqr(),
            StateRepr::Density(r) => (target.adjoint() * r * target)[(0, 0)].re,
        })
    }
}

pub(crate) fn min_eigenvalue(m: &CMatrix) -> f64 {
    let sym = (m + m.adjoint()) * C64::from(0.5);
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn expectation(state: &QuantumState, op: &LinearOperator) -> Result<C64> {
    if state.space != op.space {
        return Err(Error::DimensionMismatch(
            "state and operator live on different spaces".into(),
        ));
    }
    Ok(expectation_matrix(&state.repr, &op.matrix))
}

pub(crate) fn expectation_matrix(repr: &StateRepr, m: &CMatrix) -> C64 {
    match repr {
        StateRepr::Pure(v) => v.dotc(&(m * v)),
        StateRepr::Density(r) => (r * m).trace(),
    }
}

/// Projectors onto the dual-rail subspaces of the transmon pair (q1, q2).
#[derive(Clone, Debug)]
pub struct LogicalProjectors {
    pub p00: LinearOperator,
    pub p0l: LinearOperator,
    pub p1l: LinearOperator,
    pub pleak: LinearOperator,
}

/// Two-mode amplitude vector on the (q1, q2) factor for the logical states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualRailLevel {
    Vacuum,
    Zero,
    One,
}

fn pair_vector(space: &ModeSpace, q1: usize, q2: usize, level: DualRailLevel) -> CVector {
    let (d1, d2) = (space.dims()[q1], space.dims()[q2]);
    let mut v = CVector::zeros(d1 * d2);
    let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    match level {
        DualRailLevel::Vacuum => v[0] = ONE,
        // |q1 q2> with q1 the more significant digit: |01> -> index 1, |10> -> index d2.
        DualRailLevel::Zero => {
            v[1] = s;
            v[d2] = -s;
        }
        DualRailLevel::One => {
            v[1] = s;
            v[d2] = s;
        }
    }
    v
}

fn check_pair(space: &ModeSpace, q1: usize, q2: usize) -> Result<()> {
    if q1 >= space.n_modes() || q2 >= space.n_modes() || q1 == q2 {
        return Err(Error::InvalidArgument(format!(
            "invalid transmon pair ({q1}, {q2})"
        )));
    }
    Ok(())
}

/// Embeds an operator on the (q1, q2) factor into the full space, with
/// identity on all other modes. Works for non-adjacent modes by permuting.
fn embed_pair(space: &ModeSpace, q1: usize, q2: usize, pair_op: &CMatrix) -> CMatrix {
    let n = space.total_dim();
    let d2 = space.dims()[q2];
    let mut out = CMatrix::zeros(n, n);
    for col in 0..n {
        let lc = space.levels(col);
        let pc = lc[q1] * d2 + lc[q2];
        for row in 0..n {
            let lr = space.levels(row);
            let same_rest = lr
                .iter()
                .zip(&lc)
                .enumerate()
                .all(|(k, (a, b))| k == q1 || k == q2 || a == b);
            if !same_rest {
                continue;
            }
            let pr = lr[q1] * d2 + lr[q2];
            out[(row, col)] = pair_op[(pr, pc)];
        }
    }
    out
}

pub fn logical_projectors(
    space: &Arc<ModeSpace>,
    q1: usize,
    q2: usize,
) -> Result<LogicalProjectors> {
    check_pair(space, q1, q2)?;
    let proj = |level| {
        let v = pair_vector(space, q1, q2, level);
        embed_pair(space, q1, q2, &(&v * v.adjoint()))
    };
    let p00 = proj(DualRailLevel::Vacuum);
    let p0l = proj(DualRailLevel::Zero);
    let p1l = proj(DualRailLevel::One);
    let n = space.total_dim();
    let pleak = CMatrix::identity(n, n) - &p00 - &p0l - &p1l;
    let mk = |m: CMatrix| LinearOperator {
        matrix: m,
        space: space.clone(),
        hermitian: true,
    };
    Ok(LogicalProjectors {
        p00: mk(p00),
        p0l: mk(p0l),
        p1l: mk(p1l),
        pleak: mk(pleak),
    })
}

/// State vector with the transmon pair in `level` and every other mode in the
/// Fock level given by `rest` (indexed by full mode index; entries for q1, q2
/// are ignored).
pub fn dual_rail_vector(
    space: &ModeSpace,
    q1: usize,
    q2: usize,
    level: DualRailLevel,
    rest: &[usize],
) -> Result<CVector> {
    check_pair(space, q1, q2)?;
    if rest.len() != space.n_modes() {
        return Err(Error::DimensionMismatch(
            "rest levels must list every mode".into(),
        ));
    }
    let pair = pair_vector(space, q1, q2, level);
    let d2 = space.dims()[q2];
    let mut v = CVector::zeros(space.total_dim());
    for (p, amp) in pair.iter().enumerate() {
        if *amp == ZERO {
            continue;
        }
        let mut levels = rest.to_vec();
        levels[q1] = p / d2;
        levels[q2] = p % d2;
        v[space.basis_index(&levels)?] = *amp;
    }
    Ok(v)
}

pub fn dual_rail_state(
    space: &Arc<ModeSpace>,
    q1: usize,
    q2: usize,
    level: DualRailLevel,
) -> Result<QuantumState> {
    let v = dual_rail_vector(space, q1, q2, level, &vec![0; space.n_modes()])?;
    QuantumState::pure(space.clone(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_transmons(d: usize) -> Arc<ModeSpace> {
        ModeSpace::new(&[(ModeLabel::Transmon1, d), (ModeLabel::Transmon2, d)]).unwrap()
    }

    #[test]
    fn qubit_lowering_matrix() {
        let s = ModeSpace::new(&[(ModeLabel::Transmon1, 2)]).unwrap();
        let a = mode_operator(&s, 0, OperatorKind::Lower).unwrap();
        let m = a.matrix();
        assert_eq!(m[(0, 1)], ONE);
        assert_eq!(m[(0, 0)], ZERO);
        assert_eq!(m[(1, 0)], ZERO);
        assert_eq!(m[(1, 1)], ZERO);
    }

    #[test]
    fn number_counts_fock_level() {
        let s = two_transmons(3);
        let n0 = mode_operator(&s, 0, OperatorKind::Number).unwrap();
        let st = QuantumState::fock(&s, &[1, 0]).unwrap();
        assert_abs_diff_eq!(expectation(&st, &n0).unwrap().re, 1.0);
    }

    #[test]
    fn canonical_commutator_on_low_block() {
        let s = two_transmons(3);
        let a = mode_operator(&s, 1, OperatorKind::Lower).unwrap();
        let c = a.commutator(&a.dagger()).unwrap();
        // Restrict to levels {0,1} of mode 1: commutator is the identity there.
        for idx in 0..s.total_dim() {
            let l = s.levels(idx);
            if l[1] <= 1 {
                assert_abs_diff_eq!(c.matrix()[(idx, idx)].re, 1.0, epsilon = 1e-14);
            } else {
                assert_abs_diff_eq!(c.matrix()[(idx, idx)].re, -2.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sigma_on_large_mode_rejected() {
        let s = two_transmons(3);
        assert!(mode_operator(&s, 0, OperatorKind::SigmaZ).is_err());
        assert!(mode_operator(&s, 2, OperatorKind::Lower).is_err());
    }

    #[test]
    fn tls_mode_must_be_qubit() {
        assert!(ModeSpace::new(&[(ModeLabel::Tls, 3)]).is_err());
        assert!(ModeSpace::new(&[(ModeLabel::Transmon1, 1)]).is_err());
    }

    #[test]
    fn expectation_examples() {
        let s = two_transmons(2);
        let vac = QuantumState::fock(&s, &[0, 0]).unwrap();
        let n = mode_operator(&s, 0, OperatorKind::Number).unwrap();
        assert_eq!(expectation(&vac, &n).unwrap(), ZERO);

        let mut v = CVector::zeros(4);
        v[1] = C64::from(0.5f64.sqrt());
        v[2] = C64::from(0.5f64.sqrt());
        let sup = QuantumState::pure(s.clone(), v).unwrap();
        let mut p01 = CMatrix::zeros(4, 4);
        p01[(1, 1)] = ONE;
        let p01 = LinearOperator::hermitian(s.clone(), p01).unwrap();
        assert_abs_diff_eq!(expectation(&sup, &p01).unwrap().re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn density_identity_expectation() {
        let s = ModeSpace::new(&[(ModeLabel::Transmon1, 3)]).unwrap();
        let rho = CMatrix::from_fn(3, 3, |r, c| {
            if r == c {
                C64::from([0.5, 0.3, 0.2][r])
            } else {
                C64::new(0.05, 0.01 * (r as f64 - c as f64))
            }
        });
        let st = QuantumState::density(s.clone(), rho).unwrap();
        let id = LinearOperator::identity(s);
        assert_abs_diff_eq!(expectation(&st, &id).unwrap().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_states_rejected() {
        let s = two_transmons(2);
        assert!(QuantumState::pure(s.clone(), CVector::from_element(4, ONE)).is_err());
        let mut rho = CMatrix::zeros(4, 4);
        rho[(0, 0)] = C64::from(1.2);
        rho[(1, 1)] = C64::from(-0.2);
        assert!(QuantumState::density(s, rho).is_err());
    }

    #[test]
    fn logical_projector_examples() {
        let s = two_transmons(3);
        let p = logical_projectors(&s, 0, 1).unwrap();
        let one = dual_rail_state(&s, 0, 1, DualRailLevel::One).unwrap();
        assert_abs_diff_eq!(expectation(&one, &p.p1l).unwrap().re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&one, &p.p0l).unwrap().re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&one, &p.p00).unwrap().re, 0.0, epsilon = 1e-14);

        let s01 = QuantumState::fock(&s, &[0, 1]).unwrap();
        assert_abs_diff_eq!(expectation(&s01, &p.p0l).unwrap().re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&s01, &p.p1l).unwrap().re, 0.5, epsilon = 1e-14);

        let s11 = QuantumState::fock(&s, &[1, 1]).unwrap();
        assert_abs_diff_eq!(
            expectation(&s11, &p.pleak).unwrap().re,
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn projectors_with_spectator_modes() {
        let s = ModeSpace::new(&[
            (ModeLabel::Transmon1, 3),
            (ModeLabel::Ancilla, 2),
            (ModeLabel::Transmon2, 3),
        ])
        .unwrap();
        let p = logical_projectors(&s, 0, 2).unwrap();
        let v = dual_rail_vector(&s, 0, 2, DualRailLevel::Zero, &[0, 1, 0]).unwrap();
        let st = QuantumState::pure(s.clone(), v).unwrap();
        assert_abs_diff_eq!(expectation(&st, &p.p0l).unwrap().re, 1.0, epsilon = 1e-14);
        let n_anc = mode_operator(&s, 1, OperatorKind::Number).unwrap();
        assert_abs_diff_eq!(expectation(&st, &n_anc).unwrap().re, 1.0, epsilon = 1e-14);
    }

    fn arb_space() -> impl Strategy<Value = Arc<ModeSpace>> {
        prop::collection::vec(2usize..4, 2..4).prop_map(|dims| {
            let modes: Vec<_> = dims
                .iter()
                .enumerate()
                .map(|(k, &d)| {
                    (
                        if k == 0 {
                            ModeLabel::Transmon1
                        } else if k == 1 {
                            ModeLabel::Transmon2
                        } else {
                            ModeLabel::Resonator
                        },
                        d,
                    )
                })
                .collect();
            ModeSpace::new(&modes).unwrap()
        })
    }

    proptest! {
        #[test]
        fn projectors_complete(space in arb_space()) {
            let p = logical_projectors(&space, 0, 1).unwrap();
            let sum = p.p00.matrix() + p.p0l.matrix() + p.p1l.matrix() + p.pleak.matrix();
            let n = space.total_dim();
            prop_assert!(max_abs(&(sum - CMatrix::identity(n, n))) < 1e-12);
            // Projectors are idempotent.
            for m in [p.p00.matrix(), p.p0l.matrix(), p.p1l.matrix(), p.pleak.matrix()] {
                prop_assert!(max_abs(&(m * m - m)) < 1e-12);
            }
        }

        #[test]
        fn operators_on_different_modes_commute(space in arb_space(), k in 0usize..3) {
            let i = 0;
            let j = 1 + k % (space.n_modes() - 1);
            let a = mode_operator(&space, i, OperatorKind::Lower).unwrap();
            let b = mode_operator(&space, j, OperatorKind::Raise).unwrap();
            prop_assert_eq!(max_abs(a.commutator(&b).unwrap().matrix()), 0.0);
        }

        #[test]
        fn lower_then_raise_on_vacuum(space in arb_space(), mode in 0usize..2) {
            let a = mode_operator(&space, mode, OperatorKind::Lower).unwrap();
            let n = mode_operator(&space, mode, OperatorKind::Number).unwrap();
            let vac = QuantumState::fock(&space, &vec![0; space.n_modes()]).unwrap();
            let StateRepr::Pure(v) = vac.repr() else { unreachable!() };
            let out = a.dagger().matrix() * (a.matrix() * v);
            prop_assert_eq!(out.norm(), 0.0);
            prop_assert_eq!(expectation(&vac, &n).unwrap().re, 0.0);
        }

        #[test]
        fn basis_index_roundtrip(space in arb_space(), seed in 0usize..1000) {
            let idx = seed % space.total_dim();
            let lv = space.levels(idx);
            prop_assert_eq!(space.basis_index(&lv).unwrap(), idx);
        }
    }
}
