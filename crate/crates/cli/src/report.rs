//! Analysis of record files into summary metrics and plot columns. Works
//! from the records alone and never re-runs a simulation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use dualrail::analysis::{
    check_fraction, curve, dephasing_bound_per_check, fit_damped_oscillation,
    fit_exponential_weighted, fit_fringe, fringe_coherence, rb_analyze, CoherenceBudget,
    CurvePoint, Offset, PostselectionPolicy, Proportion,
};
use dualrail::dynamics::record::{CheckFlag, ShotRecord};
use dualrail::units::{to_mhz, TWO_PI};
use serde::Deserialize;

use crate::config::*;
use crate::error::CliError;
use crate::records::{Payload, RecordFile};
use crate::run::fringe_phases;

#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// 1σ uncertainty; zero for exact values.
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub name: String,
    /// (x, y, yerr) rows.
    pub rows: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Analysis {
    pub metrics: Vec<Metric>,
    pub plots: Vec<Plot>,
    /// Fits that could not be performed, with the reason.
    pub notes: Vec<String>,
}

impl Analysis {
    fn push(&mut self, name: impl Into<String>, value: f64, sigma: f64) {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            sigma,
        });
    }

    fn plot(&mut self, name: impl Into<String>, rows: Vec<[f64; 3]>) {
        self.plots.push(Plot {
            name: name.into(),
            rows,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\tsigma\n");
        for m in &self.metrics {
            let _ = writeln!(s, "{}\t{}\t{}", m.name, m.value, m.sigma);
        }
        s
    }

    pub fn notes_text(&self) -> String {
        self.notes.iter().map(|n| format!("# {n}\n")).collect()
    }
}

pub fn plot_tsv(plot: &Plot) -> String {
    let mut s = String::from("x\ty\tyerr\n");
    for r in &plot.rows {
        let _ = writeln!(s, "{}\t{}\t{}", r[0], r[1], r[2]);
    }
    s
}

fn prop_row(x: f64, p: &Proportion) -> [f64; 3] {
    [x, p.value, p.sigma()]
}

/// Drops points where postselection kept no shots.
fn finite(rows: &[[f64; 3]]) -> Vec<[f64; 3]> {
    rows.iter().filter(|r| r[1].is_finite()).copied().collect()
}

fn shots(file: &RecordFile) -> Result<&[ShotRecord], CliError> {
    match &file.payload {
        Payload::Shots(v) => Ok(v),
        Payload::Rows(_) => Err(CliError::Records(
            "expected shot records, found result rows".into(),
        )),
    }
}

fn rows<T: for<'de> Deserialize<'de>>(file: &RecordFile) -> Result<Vec<T>, CliError> {
    match &file.payload {
        Payload::Rows(v) => v
            .iter()
            .map(|r| {
                serde_json::from_value(r.clone())
                    .map_err(|e| CliError::Records(format!("bad row: {e}")))
            })
            .collect(),
        Payload::Shots(_) => Err(CliError::Records(
            "expected result rows, found shot records".into(),
        )),
    }
}

/// Weighted straight line y = a + b·x; returns ((a, σa), (b, σb)).
pub fn fit_line(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<((f64, f64), (f64, f64))> {
    let w: Vec<f64> = sigma
        .iter()
        .map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let d = sw * sxx - sx * sx;
    if x.len() < 2 || d.abs() <= 1e-300 {
        return None;
    }
    let b = (sw * sxy - sx * sy) / d;
    let a = (sxx * sy - sx * sxy) / d;
    Some(((a, (sxx / d).sqrt()), (b, (sw / d).sqrt())))
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TWO_PI) - PI
}

/// Decay fit of the success probability towards 1/2.
fn decay_to_half(a: &mut Analysis, pts: &[CurvePoint], metric: &str, plot: &str) {
    let rows: Vec<[f64; 3]> = pts
        .iter()
        .filter_map(|p| p.success.as_ref().map(|s| prop_row(p.x * 1e6, s)))
        .collect();
    fit_decay(a, &rows, Offset::Fixed(0.5), metric);
    a.plot(plot, rows);
}

fn fit_decay(a: &mut Analysis, rows: &[[f64; 3]], offset: Offset, metric: &str) {
    let rows = finite(rows);
    let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let s: Vec<f64> = rows.iter().map(|r| r[2].max(1e-6)).collect();
    match fit_exponential_weighted(&t, &y, Some(&s), offset) {
        Ok(f) if f.flag.is_none() => {
            a.push(metric, f.value("tau"), f.sigma("tau"));
            a.push(
                format!("{metric}_amplitude"),
                f.value("amplitude"),
                f.sigma("amplitude"),
            );
            if matches!(offset, Offset::Free) {
                a.push(
                    format!("{metric}_offset"),
                    f.value("offset"),
                    f.sigma("offset"),
                );
            }
        }
        Ok(f) => a.notes.push(format!(
            "{metric}: fit flagged {}",
            f.flag.unwrap_or_default()
        )),
        Err(e) => a.notes.push(format!("{metric}: {e}")),
    }
}

fn ramsey(
    a: &mut Analysis,
    recs: &[ShotRecord],
    policy: PostselectionPolicy,
) -> Result<(), CliError> {
    let pts = curve(recs, policy)?;
    let rows: Vec<[f64; 3]> = pts.iter().map(|p| prop_row(p.x * 1e6, &p.p_one)).collect();
    let fit_rows = finite(&rows);
    let t: Vec<f64> = fit_rows.iter().map(|r| r[0]).collect();
    let y: Vec<f64> = fit_rows.iter().map(|r| r[1]).collect();
    match fit_damped_oscillation(&t, &y) {
        Ok(f) => {
            a.push(
                "ramsey_frequency_mhz",
                f.value("frequency") / TWO_PI,
                f.sigma("frequency") / TWO_PI,
            );
            let k = f.value("rate");
            if k > 0.0 {
                a.push("t2_star_us", 1.0 / k, f.sigma("rate") / (k * k));
            } else {
                a.notes.push("t2_star_us: no decay resolved".into());
            }
            a.push(
                "ramsey_amplitude",
                f.value("amplitude"),
                f.sigma("amplitude"),
            );
        }
        Err(e) => a.notes.push(format!("ramsey fit: {e}")),
    }
    a.plot("fig2a_ramsey", rows);
    Ok(())
}

fn t1_logical(
    a: &mut Analysis,
    recs: &[ShotRecord],
    policy: PostselectionPolicy,
) -> Result<(), CliError> {
    let pts = curve(recs, policy)?;
    let kept: Vec<[f64; 3]> = pts.iter().map(|p| prop_row(p.x * 1e6, &p.kept)).collect();
    fit_decay(a, &kept, Offset::Free, "t_eras_us");
    a.plot("fig2a_erasure", kept);
    let ones: Vec<[f64; 3]> = pts.iter().map(|p| prop_row(p.x * 1e6, &p.p_one)).collect();
    fit_decay(a, &ones, Offset::Fixed(0.5), "t1_logical_us");
    a.plot("fig2a_t1_logical", ones);
    Ok(())
}

fn rb(
    a: &mut Analysis,
    recs: &[ShotRecord],
    policies: &[PostselectionPolicy],
) -> Result<(), CliError> {
    for &policy in policies {
        let tag = policy.name();
        let r = match rb_analyze(recs, policy) {
            Ok(r) => r,
            Err(e) => {
                a.notes.push(format!("rb {tag}: {e}"));
                continue;
            }
        };
        a.push(
            format!("epsilon_{tag}"),
            r.erasure_per_clifford.value,
            r.erasure_per_clifford.sigma,
        );
        a.push(
            format!("r_{tag}"),
            r.residual_per_clifford.value,
            r.residual_per_clifford.sigma,
        );
        a.push(
            format!("epsilon_x90_{tag}"),
            r.erasure_per_x90.value,
            r.erasure_per_x90.sigma,
        );
        a.push(
            format!("r_x90_{tag}"),
            r.residual_per_x90.value,
            r.residual_per_x90.sigma,
        );
        match r.bias {
            Some(b) => a.push(format!("bias_{tag}"), b.value, b.sigma),
            None => a
                .notes
                .push(format!("bias_{tag}: residual error not resolved")),
        }
        a.plot(
            format!("fig3_rb_survival_{tag}"),
            r.points
                .iter()
                .map(|p| prop_row(p.depth, &p.survival))
                .collect(),
        );
        a.plot(
            format!("fig3_rb_postselection_{tag}"),
            r.points
                .iter()
                .map(|p| prop_row(p.depth, &p.kept))
                .collect(),
        );
    }
    Ok(())
}

fn erasure_metrics(
    a: &mut Analysis,
    cfg: &ExperimentConfig,
    e: &ErasureMetrics,
    recs: &[ShotRecord],
) -> Result<(), CliError> {
    let flagged = |x: f64| {
        let group: Vec<&ShotRecord> = recs.iter().filter(|r| r.x == x).collect();
        let k = group
            .iter()
            .filter(|r| {
                r.check_outcomes
                    .first()
                    .is_some_and(|c| c.flag == CheckFlag::Erasure)
            })
            .count();
        Proportion::new(k, group.len())
    };
    let vac = flagged(0.0);
    if vac.trials == 0 {
        return Err(CliError::Records(
            "no vacuum shots in erasure-metrics records".into(),
        ));
    }
    let fn_ = Proportion::new(vac.trials - vac.successes, vac.trials);
    let (z, o, eq) = (flagged(1.0), flagged(2.0), flagged(3.0));
    let poles = Proportion::new(z.successes + o.successes, z.trials + o.trials);
    a.push("p_false_negative", fn_.value, fn_.sigma());
    a.push("p_false_positive_0l", z.value, z.sigma());
    a.push("p_false_positive_1l", o.value, o.sigma());
    a.push("p_false_positive_poles", poles.value, poles.sigma());
    a.push("p_false_positive_equator", eq.value, eq.sigma());
    let t_eras = e.t_eras_us * 1e-6;
    let cf = check_fraction(cfg.check.duration(), t_eras)?;
    a.push("check_fraction", cf, 0.0);
    a.push("missed_erasure_model", cf * cfg.check.p_false_negative, 0.0);
    a.push("missed_erasure_measured", cf * fn_.value, cf * fn_.sigma());
    a.plot(
        "fig4_check_flags",
        [vac, z, o, eq]
            .iter()
            .enumerate()
            .map(|(k, p)| prop_row(k as f64, p))
            .collect(),
    );
    Ok(())
}

fn check_dephasing(
    a: &mut Analysis,
    e: &CheckDephasingSweep,
    recs: &[ShotRecord],
) -> Result<(), CliError> {
    let phases = fringe_phases(e.phases);
    let n = e.m_values.len() * e.phases;
    let mut ones = vec![(0usize, 0usize); n];
    for r in recs {
        let k = r.circuit as usize;
        if k >= n {
            return Err(CliError::Records(format!(
                "circuit index {k} outside the configured sweep"
            )));
        }
        if e.policy.keeps(r) {
            ones[k].1 += 1;
            if r.final_bits == [1, 0] {
                ones[k].0 += 1;
            }
        }
    }
    let mut fringe_rows = Vec::new();
    let mut contrast_rows = Vec::new();
    for (j, &m) in e.m_values.iter().enumerate() {
        let y: Vec<f64> = (0..e.phases)
            .map(|i| Proportion::new(ones[j * e.phases + i].0, ones[j * e.phases + i].1).value)
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            a.notes
                .push(format!("fringe at M = {m}: no shots kept at some phase"));
            continue;
        }
        match fit_fringe(&phases, &y) {
            Ok(f) => {
                fringe_rows.push((m as f64, f.value("phase"), f.sigma("phase")));
                contrast_rows.push([m as f64, fringe_coherence(&f), 2.0 * f.sigma("amplitude")]);
            }
            Err(err) => a.notes.push(format!("fringe at M = {m}: {err}")),
        }
    }
    if let Some(&(_, phi0, _)) = fringe_rows.first() {
        let rel: Vec<[f64; 3]> = fringe_rows
            .iter()
            .map(|&(m, p, s)| [m, wrap(p - phi0), s])
            .collect();
        let x: Vec<f64> = rel.iter().map(|r| r[0]).collect();
        let y: Vec<f64> = rel.iter().map(|r| r[1]).collect();
        let s: Vec<f64> = rel.iter().map(|r| r[2]).collect();
        // The refocusing pulse inverts the phase acquired in the first arm,
        // so the fringe moves against it.
        if let Some((_, (b, sb))) = fit_line(&x, &y, &s) {
            a.push("phase_per_check_rad", -b, sb);
        }
        let worst = rel.iter().map(|r| r[1].abs()).fold(0.0, f64::max);
        a.push("max_abs_phase_shift_rad", worst, 0.0);
        a.plot("fig8_phase_vs_checks", rel);
    }
    a.plot("fig8_contrast_vs_checks", contrast_rows);
    if let Some(b) = &e.bound {
        for &t2 in &b.t2_us {
            let t2s = t2.is_finite().then_some(t2 * 1e-6);
            let v = dephasing_bound_per_check(b.coherence, b.n_checks, b.tau_us * 1e-6, t2s)?;
            let label = if t2.is_finite() {
                format!("{t2}us")
            } else {
                "inf".into()
            };
            a.push(format!("bound_per_check_t2_{label}"), v.value, 0.0);
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct CrossingRow {
    omega2: f64,
    lower: f64,
    upper: f64,
}

fn spectroscopy(a: &mut Analysis, file: &RecordFile) -> Result<(), CliError> {
    let r: Vec<CrossingRow> = rows(file)?;
    let ghz = |w: f64| w / TWO_PI / 1e9;
    let best = r
        .iter()
        .min_by(|x, y| (x.upper - x.lower).total_cmp(&(y.upper - y.lower)))
        .ok_or_else(|| CliError::Records("no spectroscopy rows".into()))?;
    a.push("min_gap_mhz", to_mhz(best.upper - best.lower), 0.0);
    a.push("omega2_at_min_gap_ghz", ghz(best.omega2), 0.0);
    a.push(
        "two_g12_mhz",
        to_mhz(2.0 * file.header.config.device.resolve()?.g12),
        0.0,
    );
    a.plot(
        "fig1b_lower",
        r.iter()
            .map(|c| [ghz(c.omega2), ghz(c.lower), 0.0])
            .collect(),
    );
    a.plot(
        "fig1b_upper",
        r.iter()
            .map(|c| [ghz(c.omega2), ghz(c.upper), 0.0])
            .collect(),
    );
    a.plot(
        "fig1b_gap",
        r.iter()
            .map(|c| [ghz(c.omega2), to_mhz(c.upper - c.lower), 0.0])
            .collect(),
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum OperatingRow {
    Point {
        offset: f64,
        gap: f64,
        gap_expansion: f64,
        sensitivity_q1: f64,
        sensitivity_q2: f64,
    },
    Ramsey {
        offset: f64,
        frequency: f64,
    },
    Refinement {
        offset: f64,
        predicted: f64,
        curvature: f64,
    },
}

fn operating_point(a: &mut Analysis, file: &RecordFile) -> Result<(), CliError> {
    let r: Vec<OperatingRow> = rows(file)?;
    let g12 = file.header.config.device.resolve()?.g12;
    let mut gap = Vec::new();
    let mut expansion = Vec::new();
    let mut sens = Vec::new();
    let mut ramsey = Vec::new();
    for row in &r {
        match *row {
            OperatingRow::Point {
                offset,
                gap: e,
                gap_expansion,
                sensitivity_q1,
                sensitivity_q2,
            } => {
                gap.push([to_mhz(offset), to_mhz(e), 0.0]);
                expansion.push([to_mhz(offset), to_mhz(gap_expansion), 0.0]);
                sens.push((offset, sensitivity_q1, sensitivity_q2));
            }
            OperatingRow::Ramsey { offset, frequency } => {
                ramsey.push([to_mhz(offset), to_mhz(frequency), 0.0])
            }
            OperatingRow::Refinement {
                offset,
                predicted,
                curvature,
            } => {
                a.push("ramsey_optimal_offset_mhz", to_mhz(offset), 0.0);
                a.push("predicted_optimal_offset_mhz", to_mhz(predicted), 0.0);
                a.push("curvature_over_inverse_2g", curvature * 2.0 * g12, 0.0);
            }
        }
    }
    let best = gap
        .iter()
        .min_by(|x, y| x[1].total_cmp(&y[1]))
        .ok_or_else(|| CliError::Records("no operating-point rows".into()))?;
    a.push("grid_optimal_offset_mhz", best[0], 0.0);
    a.push("min_gap_mhz", best[1], 0.0);
    if let Some(&(_, s1, s2)) = sens.iter().min_by(|x, y| x.1.abs().total_cmp(&y.1.abs())) {
        a.push("sensitivity_q1_at_optimum", s1, 0.0);
        a.push("sensitivity_q2_at_optimum", s2, 0.0);
    }
    a.plot("fig5_gap_vs_offset", gap);
    a.plot("fig5_gap_expansion_vs_offset", expansion);
    if !ramsey.is_empty() {
        a.plot("fig5_ramsey_gap_vs_offset", ramsey);
    }
    Ok(())
}

fn budget(a: &mut Analysis, file: &RecordFile) -> Result<(), CliError> {
    let b: Vec<CoherenceBudget> = rows(file)?;
    let b = b
        .first()
        .ok_or_else(|| CliError::Records("no budget row".into()))?;
    a.push("gap_mhz", to_mhz(b.gap), 0.0);
    a.push("johnson_t1_ms", b.johnson_t1 * 1e3, 0.0);
    a.push("one_over_f_t1_ms", b.one_over_f_t1 * 1e3, 0.0);
    a.push("photon_t1_ms", b.photon_t1 * 1e3, 0.0);
    for (k, t) in b.photon_t_phi.iter().enumerate() {
        a.push(format!("photon_t_phi_q{}_us", k + 1), t * 1e6, 0.0);
    }
    a.push("sensitivity_resonant", b.sensitivity_resonant, 0.0);
    a.push("sensitivity_q2", b.sensitivity_q2, 0.0);
    a.push("optimal_offset_mhz", to_mhz(b.optimal_offset), 0.0);
    Ok(())
}

/// Runs the analysis matching the experiment recorded in the header.
/// `policies` overrides the configured postselection policy.
pub fn analyze(
    file: &RecordFile,
    policies: Option<&[PostselectionPolicy]>,
) -> Result<Analysis, CliError> {
    let cfg = &file.header.config;
    let mut a = Analysis::default();
    let first =
        |default: PostselectionPolicy| policies.and_then(|p| p.first().copied()).unwrap_or(default);
    match &cfg.experiment {
        Experiment::Spectroscopy(_) => spectroscopy(&mut a, file)?,
        Experiment::OperatingPointSweep(_) => operating_point(&mut a, file)?,
        Experiment::BudgetReport(_) => budget(&mut a, file)?,
        Experiment::Ramsey(e) => ramsey(&mut a, shots(file)?, first(e.policy))?,
        Experiment::Echo(e) => {
            let pts = curve(shots(file)?, first(e.policy))?;
            decay_to_half(&mut a, &pts, "t2_echo_us", "fig2b_echo");
        }
        Experiment::Cpmg(e) => {
            let pts = curve(shots(file)?, first(e.policy))?;
            decay_to_half(
                &mut a,
                &pts,
                &format!("t2_cpmg{}_us", e.n_pulses),
                &format!("fig2b_cpmg{}", e.n_pulses),
            );
        }
        Experiment::T1Logical(e) => t1_logical(&mut a, shots(file)?, first(e.policy))?,
        Experiment::Rb(e) => rb(&mut a, shots(file)?, policies.unwrap_or(&e.policies))?,
        Experiment::ErasureMetrics(e) => erasure_metrics(&mut a, cfg, e, shots(file)?)?,
        Experiment::CheckDephasingSweep(e) => {
            let mut e = e.clone();
            e.policy = first(e.policy);
            check_dephasing(&mut a, &e, shots(file)?)?
        }
    }
    Ok(a)
}
