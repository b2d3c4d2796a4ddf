//! Monte Carlo wavefunction (norm-jump) trajectories.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::hamiltonian::TimeDependentHamiltonian;
use crate::dynamics::integrate::{
    dopri_step, integrate, integrate_observed, OdeOptions, StepControl,
};
use crate::dynamics::lindblad::Dissipator;
use crate::dynamics::record::{
    ChannelLabel, CheckFlag, CheckOutcome, CollapseChannel, FinalLabel, JumpEvent, ShotRecord,
};
use crate::dynamics::schedule::Schedule;
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, QuantumState, StateRepr, C64, I};
use crate::rng::{rng_from_seed, SimRng};

/// Hooks for instantaneous events during a shot. Implementations live in the
/// protocol layer (erasure checks, final readout).
pub trait ShotObserver: Sync {
    /// Called at each schedule check time with the normalized state, which
    /// the observer may modify (it must stay normalized).
    fn on_check(&self, t: f64, psi: &mut CVector, rng: &mut SimRng) -> CheckFlag;
    /// Called once at the end of the shot.
    fn on_end(&self, psi: &CVector, rng: &mut SimRng) -> ([u8; 2], FinalLabel);
}

/// Observer that never flags and reports a fixed outcome.
pub struct NullObserver;

impl ShotObserver for NullObserver {
    fn on_check(&self, _t: f64, _psi: &mut CVector, _rng: &mut SimRng) -> CheckFlag {
        CheckFlag::NoErasure
    }

    fn on_end(&self, _psi: &CVector, _rng: &mut SimRng) -> ([u8; 2], FinalLabel) {
        ([0, 0], FinalLabel::InSubspace)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub final_state: CVector,
    pub jumps: Vec<JumpEvent>,
    pub record: ShotRecord,
    /// Normalized states at the requested sample times.
    pub snapshots: Vec<CVector>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum EventPoint {
    Check,
    Sample(usize),
}

struct Interval {
    start: f64,
    end: f64,
    is_static: bool,
}

/// Precomputed evolution structure for one Hamiltonian, channel set and
/// schedule. Shots differ only in their random streams and observer choices.
pub struct TrajectoryEngine {
    h: TimeDependentHamiltonian,
    diss: Dissipator,
    labels: Vec<ChannelLabel>,
    points: Vec<(f64, Vec<EventPoint>)>,
    intervals: Vec<Interval>,
    propagators: Option<Vec<CMatrix>>,
    n_samples: usize,
    opts: OdeOptions,
}

fn merge_times(mut times: Vec<(f64, Option<EventPoint>)>, tol: f64) -> Vec<(f64, Vec<EventPoint>)> {
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, Vec<EventPoint>)> = Vec::new();
    for (t, ev) in times {
        match out.last_mut() {
            Some(last) if (t - last.0).abs() <= tol => {
                if let Some(e) = ev {
                    last.1.push(e);
                }
            }
            _ => out.push((t, ev.into_iter().collect())),
        }
    }
    for p in &mut out {
        // Snapshots see the state before the check at the same instant.
        p.1.sort_by_key(|e| match e {
            EventPoint::Sample(_) => 0,
            EventPoint::Check => 1,
        });
    }
    out
}

impl TrajectoryEngine {
    /// `sample_times` adds extra instants at which normalized states are
    /// recorded. With `precompute` the interval propagators are computed once
    /// and shared by all shots.
    pub fn new(
        h: TimeDependentHamiltonian,
        channels: &[CollapseChannel],
        schedule: &Schedule,
        sample_times: &[f64],
        precompute: bool,
        opts: OdeOptions,
    ) -> Result<Self> {
        schedule.validate()?;
        let total = schedule.total_duration;
        if let Some(cov) = h.trace_coverage() {
            if cov < total * (1.0 - 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "noise traces cover {cov:.6e} s but the schedule lasts {total:.6e} s"
                )));
            }
        }
        for &t in sample_times {
            if !(0.0..=total).contains(&t) {
                return Err(Error::InvalidArgument(format!(
                    "sample time {t} outside schedule"
                )));
            }
        }
        let diss = Dissipator::new(h.dim(), channels)?;
        let labels = channels
            .iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| c.label.clone())
            .collect();
        let mut times: Vec<(f64, Option<EventPoint>)> = vec![(0.0, None), (total, None)];
        times.extend(h.breakpoints(0.0, total).into_iter().map(|t| (t, None)));
        times.extend(
            schedule
                .check_times
                .iter()
                .map(|&t| (t, Some(EventPoint::Check))),
        );
        times.extend(
            sample_times
                .iter()
                .enumerate()
                .map(|(k, &t)| (t, Some(EventPoint::Sample(k)))),
        );
        let points = merge_times(times, 1e-15 * total.max(1e-12));
        let intervals: Vec<Interval> = points
            .windows(2)
            .map(|w| Interval {
                start: w[0].0,
                end: w[1].0,
                is_static: h.is_static_on(w[0].0, w[1].0),
            })
            .collect();
        let mut engine = TrajectoryEngine {
            h,
            diss,
            labels,
            points,
            intervals,
            propagators: None,
            n_samples: sample_times.len(),
            opts,
        };
        if precompute {
            let props = engine
                .intervals
                .par_iter()
                .map(|iv| engine.interval_propagator(iv))
                .collect::<Result<Vec<_>>>()?;
            engine.propagators = Some(props);
        }
        Ok(engine)
    }

    pub fn hamiltonian(&self) -> &TimeDependentHamiltonian {
        &self.h
    }

    fn h_eff(&self, t: f64) -> CMatrix {
        self.diss.effective(&self.h.at(t))
    }

    fn static_propagator(&self, iv_start: f64, iv_end: f64, tau: f64) -> CMatrix {
        let mid = 0.5 * (iv_start + iv_end);
        (self.h_eff(mid) * (-I * tau)).exp()
    }

    fn rhs(&self) -> impl Fn(f64, &CMatrix) -> CMatrix + '_ {
        move |t: f64, y: &CMatrix| (self.h_eff(t) * y) * (-I)
    }

    fn interval_propagator(&self, iv: &Interval) -> Result<CMatrix> {
        if iv.is_static {
            return Ok(self.static_propagator(iv.start, iv.end, iv.end - iv.start));
        }
        let n = self.h.dim();
        let mut h_hint = 0.0;
        integrate(
            &self.rhs(),
            iv.start,
            iv.end,
            CMatrix::identity(n, n),
            &self.opts,
            &mut h_hint,
        )
    }

    /// Evolves ψ over [t_from, iv.end] within interval `iv`, stopping early
    /// if the squared norm drops to `r`. Returns the time reached and state.
    fn evolve_until(
        &self,
        k: usize,
        t_from: f64,
        psi: &CVector,
        r: f64,
    ) -> Result<(f64, CVector, bool)> {
        let iv = &self.intervals[k];
        let full = if t_from == iv.start {
            match &self.propagators {
                Some(p) => Some(&p[k] * psi),
                None if iv.is_static => {
                    Some(self.static_propagator(iv.start, iv.end, iv.end - iv.start) * psi)
                }
                None => None,
            }
        } else if iv.is_static {
            Some(self.static_propagator(iv.start, iv.end, iv.end - t_from) * psi)
        } else {
            None
        };
        if let Some(next) = full {
            if next.norm_squared() > r {
                return Ok((iv.end, next, false));
            }
            return self
                .locate_jump(k, t_from, psi, r)
                .map(|(t, v)| (t, v, true));
        }
        // Time-dependent interval without a stored propagator.
        let rhs = self.rhs();
        let mut crossing: Option<(f64, CMatrix, CMatrix, f64)> = None;
        let mut h_hint = 0.0;
        let y0 = CMatrix::from_column_slice(psi.len(), 1, psi.as_slice());
        let (t_end, y_end) = integrate_observed(
            &rhs,
            t_from,
            iv.end,
            y0,
            &self.opts,
            &mut h_hint,
            |tp, yp, kp, tn, yn| {
                if yn.norm_squared() <= r {
                    crossing = Some((tp, yp.clone(), kp.clone(), tn));
                    StepControl::Stop
                } else {
                    StepControl::Continue
                }
            },
        )?;
        match crossing {
            None => Ok((t_end, CVector::from_column_slice(y_end.as_slice()), false)),
            Some((tp, yp, kp, tn)) => {
                let (mut lo, mut hi) = (0.0, tn - tp);
                let mut best = y_end;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let (y_mid, _, _) = dopri_step(&rhs, tp, &yp, &kp, mid, &self.opts);
                    if y_mid.norm_squared() > r {
                        lo = mid;
                    } else {
                        hi = mid;
                        best = y_mid;
                    }
                }
                Ok((tp + hi, CVector::from_column_slice(best.as_slice()), true))
            }
        }
    }

    /// Bisection for the jump time inside interval k when it is static or has
    /// a stored propagator.
    fn locate_jump(&self, k: usize, t_from: f64, psi: &CVector, r: f64) -> Result<(f64, CVector)> {
        let iv = &self.intervals[k];
        if !iv.is_static {
            // Re-integrate without the stored propagator to resolve the crossing.
            let rhs = self.rhs();
            let mut crossing = None;
            let mut h_hint = 0.0;
            let y0 = CMatrix::from_column_slice(psi.len(), 1, psi.as_slice());
            let (t_end, y_end) = integrate_observed(
                &rhs,
                t_from,
                iv.end,
                y0,
                &self.opts,
                &mut h_hint,
                |tp, yp, kp, tn, yn| {
                    if yn.norm_squared() <= r {
                        crossing = Some((tp, yp.clone(), kp.clone(), tn));
                        StepControl::Stop
                    } else {
                        StepControl::Continue
                    }
                },
            )?;
            return match crossing {
                // Propagator and stepwise integration disagree at the margin;
                // the jump lands on the interval end.
                None => Ok((t_end, CVector::from_column_slice(y_end.as_slice()))),
                Some((tp, yp, kp, tn)) => {
                    let (mut lo, mut hi) = (0.0, tn - tp);
                    let mut best = y_end;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let (y_mid, _, _) = dopri_step(&rhs, tp, &yp, &kp, mid, &self.opts);
                        if y_mid.norm_squared() > r {
                            lo = mid;
                        } else {
                            hi = mid;
                            best = y_mid;
                        }
                    }
                    Ok((tp + hi, CVector::from_column_slice(best.as_slice())))
                }
            };
        }
        let h_eff = self.h_eff(0.5 * (iv.start + iv.end));
        let (mut lo, mut hi) = (0.0, iv.end - t_from);
        let mut best = (h_eff.clone() * (-I * hi)).exp() * psi;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let v = (h_eff.clone() * (-I * mid)).exp() * psi;
            if v.norm_squared() > r {
                lo = mid;
            } else {
                hi = mid;
                best = v;
            }
        }
        Ok((t_from + hi, best))
    }

    fn apply_jump(&self, psi: &CVector, rng: &mut SimRng) -> Result<(usize, CVector)> {
        let candidates: Vec<CVector> = self.diss.ops.iter().map(|l| l * psi).collect();
        let weights: Vec<f64> = candidates.iter().map(|v| v.norm_squared()).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Integrator(
                "jump requested with zero jump probability".into(),
            ));
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                pick = k;
                break;
            }
            u -= w;
        }
        let v = &candidates[pick];
        Ok((pick, v / C64::from(v.norm())))
    }

    fn draw_threshold(rng: &mut SimRng) -> f64 {
        // Strictly inside (0, 1).
        loop {
            let r = rng.random::<f64>();
            if r > 0.0 {
                return r;
            }
        }
    }

    fn handle_events(
        &self,
        events: &[EventPoint],
        t: f64,
        psi: &mut CVector,
        r: &mut f64,
        rng: &mut SimRng,
        observer: &dyn ShotObserver,
        record: &mut ShotRecord,
        snapshots: &mut [CVector],
    ) {
        for ev in events {
            match ev {
                EventPoint::Sample(k) => snapshots[*k] = psi.clone() / C64::from(psi.norm()),
                EventPoint::Check => {
                    let n = psi.norm();
                    *psi /= C64::from(n);
                    let flag = observer.on_check(t, psi, rng);
                    record.check_outcomes.push(CheckOutcome { time: t, flag });
                    *r = Self::draw_threshold(rng);
                }
            }
        }
    }

    pub fn run_shot(
        &self,
        psi0: &CVector,
        observer: &dyn ShotObserver,
        seed: u64,
    ) -> Result<TrajectoryResult> {
        if psi0.len() != self.h.dim() {
            return Err(Error::DimensionMismatch(
                "initial state does not match space".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let mut psi = psi0.clone();
        let mut r = Self::draw_threshold(&mut rng);
        let mut record = ShotRecord::new(seed);
        let mut jumps = Vec::new();
        let mut snapshots = vec![CVector::zeros(0); self.n_samples];
        self.handle_events(
            &self.points[0].1,
            0.0,
            &mut psi,
            &mut r,
            &mut rng,
            observer,
            &mut record,
            &mut snapshots,
        );
        for k in 0..self.intervals.len() {
            let mut t = self.intervals[k].start;
            loop {
                let (t_new, next, jumped) = self.evolve_until(k, t, &psi, r)?;
                psi = next;
                if !jumped {
                    break;
                }
                let (ch, after) = self.apply_jump(&psi, &mut rng)?;
                jumps.push(JumpEvent {
                    time: t_new,
                    label: self.labels[ch].clone(),
                });
                psi = after;
                r = Self::draw_threshold(&mut rng);
                t = t_new;
                if t >= self.intervals[k].end {
                    break;
                }
            }
            let (tp, ref events) = self.points[k + 1];
            self.handle_events(
                events,
                tp,
                &mut psi,
                &mut r,
                &mut rng,
                observer,
                &mut record,
                &mut snapshots,
            );
        }
        let n = psi.norm();
        psi /= C64::from(n);
        let (bits, label) = observer.on_end(&psi, &mut rng);
        record.final_bits = bits;
        record.true_final_label = label;
        Ok(TrajectoryResult {
            final_state: psi,
            jumps,
            record,
            snapshots,
        })
    }

    /// Runs one shot per seed in parallel. Output order follows `seeds` and
    /// each result depends only on its own seed.
    pub fn run_batch(
        &self,
        psi0: &CVector,
        observer: &dyn ShotObserver,
        seeds: &[u64],
    ) -> Result<Vec<TrajectoryResult>> {
        seeds
            .par_iter()
            .map(|&s| self.run_shot(psi0, observer, s))
            .collect()
    }
}

/// Single trajectory without stored propagators.
pub fn trajectory_run(
    h: &TimeDependentHamiltonian,
    channels: &[CollapseChannel],
    psi0: &QuantumState,
    schedule: &Schedule,
    observer: &dyn ShotObserver,
    seed: u64,
) -> Result<TrajectoryResult> {
    let StateRepr::Pure(v) = psi0.repr() else {
        return Err(Error::InvalidState(
            "trajectories need a pure initial state".into(),
        ));
    };
    let engine = TrajectoryEngine::new(
        h.clone(),
        channels,
        schedule,
        &[],
        false,
        OdeOptions::default(),
    )?;
    engine.run_shot(v, observer, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lindblad::lindblad_evolve;
    use crate::dynamics::schedule::{Channel, Envelope, PulseSegment};
    use crate::hilbert::{mode_operator, ModeLabel, ModeSpace, OperatorKind};
    use crate::units::mhz;

    fn qubit_decay(gamma: f64) -> (TimeDependentHamiltonian, Vec<CollapseChannel>, CVector) {
        let s = ModeSpace::new(&[(ModeLabel::Transmon1, 2)]).unwrap();
        let h = TimeDependentHamiltonian::new(s.clone(), CMatrix::zeros(2, 2)).unwrap();
        let ch = CollapseChannel::new(
            mode_operator(&s, 0, OperatorKind::Lower).unwrap(),
            gamma,
            ChannelLabel::DecayQ1,
        )
        .unwrap();
        let mut psi = CVector::zeros(2);
        psi[1] = C64::from(1.0);
        (h, vec![ch], psi)
    }

    #[test]
    fn zero_rates_are_unitary() {
        let s = ModeSpace::new(&[(ModeLabel::Transmon1, 2), (ModeLabel::Transmon2, 2)]).unwrap();
        let a1 = mode_operator(&s, 0, OperatorKind::Lower).unwrap();
        let a2 = mode_operator(&s, 1, OperatorKind::Lower).unwrap();
        let g = mhz(90.0);
        let hop = a1.dagger().matrix() * a2.matrix();
        let h0 = (&hop + hop.adjoint()) * C64::from(g);
        let mut h = TimeDependentHamiltonian::new(s.clone(), h0).unwrap();
        let seg = PulseSegment {
            channel: Channel::Flux2,
            envelope: Envelope::Gaussian { sigma: 12e-9 },
            t_start: 10e-9,
            duration: 48e-9,
            amplitude: mhz(20.0),
            carrier: 2.0 * g,
            phase: 0.3,
        };
        h.add_modulation(
            mode_operator(&s, 1, OperatorKind::Number)
                .unwrap()
                .into_matrix(),
            seg,
        )
        .unwrap();
        let ch = CollapseChannel::new(a1.clone(), 0.0, ChannelLabel::DecayQ1).unwrap();
        let sched = Schedule::new(vec![seg], vec![], 100e-9).unwrap();
        let psi0 = QuantumState::fock(&s, &[1, 0]).unwrap();
        let res = trajectory_run(&h, &[ch], &psi0, &sched, &NullObserver, 1).unwrap();
        assert!(res.jumps.is_empty());
        let StateRepr::Pure(v) = psi0.repr() else {
            unreachable!()
        };
        let tight = OdeOptions {
            rtol: 1e-11,
            atol: 1e-11,
            ..OdeOptions::default()
        };
        let engine = TrajectoryEngine::new(h, &[], &sched, &[], true, tight).unwrap();
        let shot = engine.run_shot(v, &NullObserver, 2).unwrap();
        assert!((shot.final_state - &res.final_state).norm() < 1e-6);
        // Norm before normalization: compare propagator unitarity.
        let u = engine.propagators.as_ref().unwrap();
        for p in u {
            let dev = (p.adjoint() * p - CMatrix::identity(4, 4))
                .iter()
                .fold(0.0f64, |a, z| a.max(z.norm()));
            assert!(dev < 1e-9, "{dev}");
        }
    }

    #[test]
    fn jump_times_are_exponential() {
        let gamma = 1.0 / 30e-6;
        let (h, ch, psi) = qubit_decay(gamma);
        let sched = Schedule::new(vec![], vec![], 20.0 / gamma).unwrap();
        let engine =
            TrajectoryEngine::new(h, &ch, &sched, &[], true, OdeOptions::default()).unwrap();
        let seeds: Vec<u64> = (0..10_000).collect();
        let res = engine.run_batch(&psi, &NullObserver, &seeds).unwrap();
        let times: Vec<f64> = res
            .iter()
            .filter_map(|r| r.jumps.first().map(|j| j.time))
            .collect();
        assert!(times.len() > 9_990);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        assert!((mean * gamma - 1.0).abs() < 0.05, "{}", mean * gamma);
        let second = times.iter().map(|t| t * t).sum::<f64>() / times.len() as f64;
        assert!((second * gamma * gamma / 2.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn batch_is_order_independent() {
        let gamma = 1.0 / 30e-6;
        let (h, ch, psi) = qubit_decay(gamma);
        let sched = Schedule::new(vec![], vec![10e-6], 40e-6).unwrap();
        let engine =
            TrajectoryEngine::new(h, &ch, &sched, &[], true, OdeOptions::default()).unwrap();
        let a = engine.run_batch(&psi, &NullObserver, &[5, 6, 7]).unwrap();
        let b = engine.run_batch(&psi, &NullObserver, &[7, 6, 5]).unwrap();
        assert_eq!(a[0].record, b[2].record);
        assert_eq!(a[0].jumps, b[2].jumps);
        assert_eq!(a[0].record.check_outcomes.len(), 1);
    }

    #[test]
    fn ensemble_matches_master_equation() {
        // Driven, decaying qubit: time-dependent intervals exercise the
        // integrated jump search.
        let s = ModeSpace::new(&[(ModeLabel::Transmon1, 2)]).unwrap();
        let a = mode_operator(&s, 0, OperatorKind::Lower).unwrap();
        let mut h = TimeDependentHamiltonian::new(s.clone(), CMatrix::zeros(2, 2)).unwrap();
        let seg = PulseSegment {
            channel: Channel::Xy1,
            envelope: Envelope::Square,
            t_start: 0.0,
            duration: 2e-6,
            amplitude: mhz(1.0),
            carrier: 0.0,
            phase: 0.0,
        };
        h.add_drive(a.dagger().into_matrix(), seg).unwrap();
        let gamma = 1.0 / 1e-6;
        let ch = vec![CollapseChannel::new(a, gamma, ChannelLabel::DecayQ1).unwrap()];
        let sample_times = [0.4e-6, 0.8e-6, 1.2e-6, 1.6e-6, 2.0e-6];
        let sched = Schedule::new(vec![seg], vec![], 2e-6).unwrap();
        let psi0 = QuantumState::fock(&s, &[0]).unwrap();
        let mut grid = vec![0.0];
        grid.extend(sample_times);
        let me =
            lindblad_evolve(&h, &ch, &psi0.to_density(), &grid, &OdeOptions::default()).unwrap();
        for precompute in [false, true] {
            let engine = TrajectoryEngine::new(
                h.clone(),
                &ch,
                &sched,
                &sample_times,
                precompute,
                OdeOptions::default(),
            )
            .unwrap();
            let StateRepr::Pure(v) = psi0.repr() else {
                unreachable!()
            };
            let seeds: Vec<u64> = (0..1000).collect();
            let res = engine.run_batch(v, &NullObserver, &seeds).unwrap();
            for (k, _) in sample_times.iter().enumerate() {
                let p_me = me[k + 1].to_density_matrix()[(1, 1)].re;
                let p_mc = res
                    .iter()
                    .map(|r| r.snapshots[k][1].norm_sqr())
                    .sum::<f64>()
                    / res.len() as f64;
                let sigma = (p_me * (1.0 - p_me) / res.len() as f64).sqrt().max(1e-3);
                assert!(
                    (p_mc - p_me).abs() < 3.0 * sigma,
                    "k={k} mc={p_mc} me={p_me} precompute={precompute}"
                );
            }
        }
    }
}
