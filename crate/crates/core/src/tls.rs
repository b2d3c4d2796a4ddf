//! A two-level defect coupled to transmon 1 of the dual-rail pair.
//!
//! Rotating frame at the parked frequency:
//! H = g(a1†a2 + h.c.) + (Δ/2)σz + λ(a1†σ− + h.c.).
//! In the hybrid modes d± = (a1 ± a2)/√2 the pair term becomes
//! g(d+†d+ − d−†d−) and the defect couples to each mode with λ/√2.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::device::{eigh, Flagged};
use crate::dynamics::record::{ChannelLabel, CollapseChannel};
use crate::error::{Error, Result};
use crate::hilbert::{
    lowering_matrix, mode_operator, CMatrix, LinearOperator, ModeLabel, ModeSpace, OperatorKind,
    C64,
};
use crate::noise::{sample_telegraph, NoiseTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlsParams {
    /// Transmon–defect coupling λ.
    pub lambda: f64,
    /// Defect detuning Δ from the parked frequency.
    pub delta_tls: f64,
    /// Defect energy relaxation time; infinite disables the channel.
    pub t1_tls: f64,
    /// Slow flicker rate of the defect in and out of resonance.
    pub toggle_rate: f64,
    /// Optional pure dephasing time of the defect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_phi_tls: Option<f64>,
}

impl TlsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(
                "TLS coupling lambda must be non-negative".into(),
            ));
        }
        if !self.delta_tls.is_finite() {
            return Err(Error::InvalidArgument("TLS detuning must be finite".into()));
        }
        if !(self.t1_tls > 0.0) {
            return Err(Error::InvalidArgument("TLS t1 must be positive".into()));
        }
        if !(self.toggle_rate >= 0.0) {
            return Err(Error::InvalidArgument(
                "TLS toggle rate must be non-negative".into(),
            ));
        }
        if let Some(t) = self.t_phi_tls {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(
                    "TLS dephasing time must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

fn check_space(space: &ModeSpace) -> Result<()> {
    let d = space.dims();
    if space.n_modes() != 3
        || d[2] != 2
        || d[0] < 2
        || d[1] < 2
        || space.labels()[2] != ModeLabel::Tls
    {
        return Err(Error::DimensionMismatch(
            "TLS Hamiltonian needs two bosonic modes followed by a TLS".into(),
        ));
    }
    Ok(())
}

/// Defect energy and exchange coupling to mode `boson` on an arbitrary space.
pub(crate) fn tls_terms(
    space: &Arc<ModeSpace>,
    boson: usize,
    tls: usize,
    p: &TlsParams,
) -> Result<CMatrix> {
    let sz = mode_operator(space, tls, OperatorKind::SigmaZ)?.into_matrix();
    let sm = mode_operator(space, tls, OperatorKind::SigmaMinus)?.into_matrix();
    let a = space.embed(boson, &lowering_matrix(space.dims()[boson]))?;
    let hop = a.adjoint() * &sm;
    Ok(sz * C64::from(0.5 * p.delta_tls) + (&hop + hop.adjoint()) * C64::from(p.lambda))
}

pub(crate) fn tls_channels(
    space: &Arc<ModeSpace>,
    tls: usize,
    p: &TlsParams,
) -> Result<Vec<CollapseChannel>> {
    let mut out = Vec::new();
    if p.t1_tls.is_finite() {
        let sm = mode_operator(space, tls, OperatorKind::SigmaMinus)?;
        out.push(CollapseChannel::new(
            sm,
            1.0 / p.t1_tls,
            ChannelLabel::TlsDecay,
        )?);
    }
    if let Some(t) = p.t_phi_tls {
        let sz = mode_operator(space, tls, OperatorKind::SigmaZ)?;
        out.push(CollapseChannel::new(sz, 0.5 / t, ChannelLabel::TlsDephase)?);
    }
    Ok(out)
}

/// Space of two bosonic modes (dimension `boson_dim` each) plus the defect.
pub fn tls_space(boson_dim: usize) -> Result<Arc<ModeSpace>> {
    ModeSpace::new(&[
        (ModeLabel::Transmon1, boson_dim),
        (ModeLabel::Transmon2, boson_dim),
        (ModeLabel::Tls, 2),
    ])
}

pub fn build_tls_hamiltonian(
    g: f64,
    params: &TlsParams,
    space: &Arc<ModeSpace>,
) -> Result<LinearOperator> {
    check_space(space)?;
    params.validate()?;
    let a1 = space.embed(0, &lowering_matrix(space.dims()[0]))?;
    let a2 = space.embed(1, &lowering_matrix(space.dims()[1]))?;
    let hop = a1.adjoint() * &a2;
    let h = (&hop + hop.adjoint()) * C64::from(g) + tls_terms(space, 0, 2, params)?;
    LinearOperator::hermitian(space.clone(), h)
}

/// Hamiltonian written directly in the hybrid-mode basis, with mode 0 = d+
/// and mode 1 = d−.
pub fn build_tls_hamiltonian_hybrid(
    g: f64,
    params: &TlsParams,
    space: &Arc<ModeSpace>,
) -> Result<LinearOperator> {
    check_space(space)?;
    params.validate()?;
    let bp = space.embed(0, &lowering_matrix(space.dims()[0]))?;
    let bm = space.embed(1, &lowering_matrix(space.dims()[1]))?;
    let sz = mode_operator(space, 2, OperatorKind::SigmaZ)?.into_matrix();
    let sm = mode_operator(space, 2, OperatorKind::SigmaMinus)?.into_matrix();
    let hop = (bp.adjoint() + bm.adjoint()) * &sm;
    let h = (bp.adjoint() * &bp - bm.adjoint() * &bm) * C64::from(g)
        + sz * C64::from(0.5 * params.delta_tls)
        + (&hop + hop.adjoint()) * C64::from(params.lambda / std::f64::consts::SQRT_2);
    LinearOperator::hermitian(space.clone(), h)
}

/// Unitary W with W† a1 W = d+ and W† a2 W = d−, so that W H W† has the
/// hybrid-mode form. Exact on states with fewer bosons than the per-mode
/// dimension.
pub fn hybrid_basis_change(space: &Arc<ModeSpace>) -> Result<CMatrix> {
    check_space(space)?;
    let a1 = space.embed(0, &lowering_matrix(space.dims()[0]))?;
    let a2 = space.embed(1, &lowering_matrix(space.dims()[1]))?;
    let gen = a1.adjoint() * &a2 - a2.adjoint() * &a1;
    let mixer = (gen * C64::from(std::f64::consts::FRAC_PI_4)).exp();
    let parity = ((a2.adjoint() * &a2) * C64::new(0.0, std::f64::consts::PI)).exp();
    Ok(parity * mixer)
}

/// Projector onto basis states with total boson number below the per-mode
/// dimension, where the truncated basis change is exact.
pub fn exact_boson_projector(space: &ModeSpace) -> CMatrix {
    let n = space.total_dim();
    let cap = space.dims()[0].min(space.dims()[1]);
    CMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |k, _| {
        let l = space.levels(k);
        if l[0] + l[1] < cap {
            C64::from(1.0)
        } else {
            C64::from(0.0)
        }
    }))
}

/// Which closed form the numeric χ_DR agrees with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiClosedForm {
    /// λ²g/(Δ² − g²), the difference of λ²/(2Δ±).
    DifferenceOfShifts,
    /// 2λ²g/(Δ² − g²).
    DoubledForm,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlsShifts {
    pub chi_plus: f64,
    pub chi_minus: f64,
    pub chi_dr: f64,
    pub closed_form: ChiClosedForm,
}

/// Numeric dispersive shifts of the hybrid modes conditioned on the defect
/// state: χ± = ½[ω±(defect excited) − ω±(defect ground)], χ_DR = χ+ − χ−.
/// Valid (flag) when |Δ ∓ g| ≥ 10·λ/√2; errors when closer than 3·λ/√2.
pub fn tls_dispersive_shifts(g: f64, params: &TlsParams) -> Result<Flagged<TlsShifts>> {
    params.validate()?;
    let c = params.lambda / std::f64::consts::SQRT_2;
    let dp = params.delta_tls - g;
    let dm = params.delta_tls + g;
    let closest = dp.abs().min(dm.abs());
    if closest < 3.0 * c {
        return Err(Error::Resonance {
            detuning: closest,
            threshold: 3.0 * c,
        });
    }
    let space = tls_space(3)?;
    let h = build_tls_hamiltonian_hybrid(g, params, &space)?;
    let level = |bp: usize, bm: usize, e: usize| space.basis_index(&[bp, bm, e]);
    let energy = |excitations: usize, target: usize| -> Result<f64> {
        let idx: Vec<usize> = (0..space.total_dim())
            .filter(|&k| space.levels(k).iter().sum::<usize>() == excitations)
            .collect();
        let block = CMatrix::from_fn(idx.len(), idx.len(), |r, c| h.matrix()[(idx[r], idx[c])]);
        let (vals, vecs) = eigh(&block);
        let pos = idx
            .iter()
            .position(|&k| k == target)
            .expect("target inside block");
        let best = (0..vals.len())
            .max_by(|&a, &b| {
                vecs[(pos, a)]
                    .norm_sqr()
                    .total_cmp(&vecs[(pos, b)].norm_sqr())
            })
            .expect("non-empty block");
        if vecs[(pos, best)].norm_sqr() < crate::device::TRACKING_THRESHOLD {
            return Err(Error::LevelCollision {
                label: format!("{:?}", space.levels(target)),
                overlap: vecs[(pos, best)].norm_sqr(),
            });
        }
        Ok(vals[best])
    };
    let e0e = energy(1, level(0, 0, 1)?)?;
    let e0g = energy(0, level(0, 0, 0)?)?;
    let wp_g = energy(1, level(1, 0, 0)?)? - e0g;
    let wm_g = energy(1, level(0, 1, 0)?)? - e0g;
    let wp_e = energy(2, level(1, 0, 1)?)? - e0e;
    let wm_e = energy(2, level(0, 1, 1)?)? - e0e;
    let chi_plus = 0.5 * (wp_e - wp_g);
    let chi_minus = 0.5 * (wm_e - wm_g);
    let chi_dr = chi_plus - chi_minus;
    let form = params.lambda.powi(2) * g / (params.delta_tls.powi(2) - g * g);
    let close = |x: f64| (chi_dr - x).abs() <= 0.1 * x.abs();
    let closed_form = if close(form) {
        ChiClosedForm::DifferenceOfShifts
    } else if close(2.0 * form) {
        ChiClosedForm::DoubledForm
    } else {
        ChiClosedForm::Neither
    };
    Ok(Flagged {
        value: TlsShifts {
            chi_plus,
            chi_minus,
            chi_dr,
            closed_form,
        },
        valid: closest >= 10.0 * c,
    })
}

/// Telegraph trace on the dual-rail gap: the defect flickering in and out
/// shifts each hybrid mode by ±χ±, so the gap toggles between ±χ_DR.
pub fn tls_telegraph_effect(
    g: f64,
    params: &TlsParams,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<NoiseTrace> {
    let shifts = tls_dispersive_shifts(g, params)?.value;
    sample_telegraph(
        2.0 * shifts.chi_dr.abs(),
        params.toggle_rate,
        duration,
        dt,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;

    fn params(lambda: f64, delta: f64) -> TlsParams {
        TlsParams {
            lambda,
            delta_tls: delta,
            t1_tls: 1e-6,
            toggle_rate: 1e3,
            t_phi_tls: None,
        }
    }

    #[test]
    fn basis_change_reproduces_hybrid_form() {
        let space = tls_space(4).unwrap();
        let p = params(mhz(5.0), mhz(300.0));
        let h = build_tls_hamiltonian(mhz(90.0), &p, &space).unwrap();
        let hh = build_tls_hamiltonian_hybrid(mhz(90.0), &p, &space).unwrap();
        let u = hybrid_basis_change(&space).unwrap();
        let proj = exact_boson_projector(&space);
        let lhs = &proj * &u * h.matrix() * u.adjoint() * &proj;
        let rhs = &proj * hh.matrix() * &proj;
        let scale = mhz(300.0);
        assert!((lhs - rhs).norm() < 1e-12 * scale);
    }

    #[test]
    fn excitation_number_is_conserved() {
        let space = tls_space(3).unwrap();
        let h = build_tls_hamiltonian(mhz(90.0), &params(mhz(5.0), mhz(120.0)), &space).unwrap();
        let n = mode_operator(&space, 0, OperatorKind::Number)
            .unwrap()
            .into_matrix()
            + mode_operator(&space, 1, OperatorKind::Number)
                .unwrap()
                .into_matrix()
            + (mode_operator(&space, 2, OperatorKind::SigmaZ)
                .unwrap()
                .into_matrix()
                + CMatrix::identity(18, 18))
                * C64::from(0.5);
        let comm = h.matrix() * &n - &n * h.matrix();
        assert!(comm.norm() < 1e-12 * mhz(120.0));
    }

    #[test]
    fn single_excitation_block_matches_three_level_solve() {
        let (g, d, l) = (mhz(90.0), mhz(300.0), mhz(5.0));
        let space = tls_space(3).unwrap();
        let h = build_tls_hamiltonian(g, &params(l, d), &space).unwrap();
        let idx: Vec<usize> = (0..18)
            .filter(|&k| space.levels(k).iter().sum::<usize>() == 1)
            .collect();
        let block = CMatrix::from_fn(3, 3, |r, c| h.matrix()[(idx[r], idx[c])]);
        let (mut full, _) = eigh(&block);
        // Basis |a1⟩, |a2⟩, |e⟩ with the defect ground energy −Δ/2 on the
        // bosonic states.
        let m = nalgebra::Matrix3::new(-0.5 * d, g, l, g, -0.5 * d, 0.0, l, 0.0, 0.5 * d);
        let mut oracle: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        full.sort_by(f64::total_cmp);
        for (a, b) in full.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12 * d, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_coupling_decouples_spectrum() {
        let space = tls_space(3).unwrap();
        let g = mhz(90.0);
        let h = build_tls_hamiltonian(g, &params(0.0, mhz(250.0)), &space).unwrap();
        let (mut vals, _) = eigh(h.matrix());
        let pair_space =
            ModeSpace::new(&[(ModeLabel::Transmon1, 3), (ModeLabel::Transmon2, 3)]).unwrap();
        let a1 = pair_space.embed(0, &lowering_matrix(3)).unwrap();
        let a2 = pair_space.embed(1, &lowering_matrix(3)).unwrap();
        let hop = a1.adjoint() * &a2;
        let (pair, _) = eigh(&((&hop + hop.adjoint()) * C64::from(g)));
        let mut direct: Vec<f64> = pair
            .iter()
            .flat_map(|&e| [e - 0.5 * mhz(250.0), e + 0.5 * mhz(250.0)])
            .collect();
        vals.sort_by(f64::total_cmp);
        direct.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12 * mhz(250.0));
        }
    }

    #[test]
    fn shifts_match_second_order_and_scale_with_lambda_squared() {
        let g = mhz(90.0);
        let p1 = params(mhz(2.0), mhz(300.0));
        let s1 = tls_dispersive_shifts(g, &p1).unwrap();
        assert!(s1.valid);
        let c2 = mhz(2.0).powi(2) / 2.0;
        assert!((s1.value.chi_plus - c2 / (mhz(300.0) - g)).abs() < 0.05 * s1.value.chi_plus.abs());
        assert!(
            (s1.value.chi_minus - c2 / (mhz(300.0) + g)).abs() < 0.05 * s1.value.chi_minus.abs()
        );
        assert_eq!(s1.value.closed_form, ChiClosedForm::DifferenceOfShifts);
        let s2 = tls_dispersive_shifts(g, &params(mhz(4.0), mhz(300.0))).unwrap();
        assert!((s2.value.chi_dr / s1.value.chi_dr - 4.0).abs() < 0.04);
    }

    #[test]
    fn decoupling_limit_and_symmetry() {
        let g = mhz(90.0);
        let l = mhz(5.0);
        let far = tls_dispersive_shifts(g, &params(l, 100.0 * g)).unwrap();
        assert!(far.value.chi_dr.abs() < 1e-3 * l * l / g);
        let pos = tls_dispersive_shifts(g, &params(l, mhz(300.0)))
            .unwrap()
            .value
            .chi_dr;
        let neg = tls_dispersive_shifts(g, &params(l, -mhz(300.0)))
            .unwrap()
            .value
            .chi_dr;
        // χ_DR is even in Δ.
        assert!((pos - neg).abs() < 1e-9 * pos.abs());
        assert!(matches!(
            tls_dispersive_shifts(g, &params(l, g + 0.1 * l)),
            Err(Error::Resonance { .. })
        ));
    }

    #[test]
    fn telegraph_levels_equal_chi_dr() {
        let g = mhz(90.0);
        let p = params(mhz(5.0), mhz(300.0));
        let chi = tls_dispersive_shifts(g, &p).unwrap().value.chi_dr.abs();
        let tr = tls_telegraph_effect(g, &p, 1e-3, 1e-6, 3).unwrap();
        assert!(tr.values.iter().all(|&v| v == chi || v == -chi));
        let frozen = tls_telegraph_effect(
            g,
            &TlsParams {
                toggle_rate: 0.0,
                ..p
            },
            1e-3,
            1e-6,
            3,
        )
        .unwrap();
        assert!(frozen.values.windows(2).all(|w| w[0] == w[1]));
    }
}
