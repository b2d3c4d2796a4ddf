//! Experiment drivers that compile circuits and collect shot records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::record::ShotRecord;
use crate::dynamics::schedule::Schedule;
use crate::error::{Error, Result};
use crate::hilbert::DualRailLevel;
use crate::protocols::builders::{compile_rb, expected_bits, CompileMode, GateParams};
use crate::protocols::check::ErasureCheckModel;
use crate::protocols::clifford::rb_generate;
use crate::protocols::executor::CircuitExecutor;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbExperiment {
    pub depths: Vec<usize>,
    pub n_circuits: usize,
    pub n_shots: usize,
    pub n_checks: usize,
    /// Idle time after each Clifford.
    #[serde(default)]
    pub idle: f64,
    #[serde(default = "default_compile")]
    pub compile: CompileMode,
}

fn default_compile() -> CompileMode {
    CompileMode::VirtualZ
}

fn tag(records: &mut [ShotRecord], x: f64, circuit: u32, expected: Option<[u8; 2]>) {
    for (s, r) in records.iter_mut().enumerate() {
        r.x = x;
        r.circuit = circuit;
        r.shot = s as u32;
        r.expected_bits = expected;
    }
}

/// Shot seeds for circuit `circuit` at sweep point `point`.
pub fn shot_seeds(seed: u64, point: u64, circuit: u64, n_shots: usize) -> Vec<u64> {
    (0..n_shots as u64)
        .map(|s| derive_seed(seed, &[point, circuit, 1, s]))
        .collect()
}

/// One compiled RB circuit.
#[derive(Clone, Debug)]
pub struct RbCircuit {
    pub depth: usize,
    pub circuit: usize,
    pub schedule: Schedule,
    pub expected: [u8; 2],
}

fn check_rb(exp: &RbExperiment) -> Result<()> {
    if exp.depths.is_empty() || exp.n_circuits == 0 || exp.n_shots == 0 {
        return Err(Error::InvalidArgument(
            "RB needs depths, circuits and shots".into(),
        ));
    }
    Ok(())
}

fn rb_circuit(
    gates: &GateParams,
    exp: &RbExperiment,
    check: &ErasureCheckModel,
    seed: u64,
    depth: usize,
    c: usize,
) -> Result<RbCircuit> {
    let target = if c % 2 == 0 {
        DualRailLevel::One
    } else {
        DualRailLevel::Zero
    };
    let seq = rb_generate(
        depth,
        derive_seed(seed, &[depth as u64, c as u64, 0]),
        target,
    )?;
    let schedule = compile_rb(gates, &seq, exp.n_checks, exp.idle, check, exp.compile)?;
    Ok(RbCircuit {
        depth,
        circuit: c,
        schedule,
        expected: expected_bits(target),
    })
}

fn rb_jobs(exp: &RbExperiment) -> Vec<(usize, usize)> {
    exp.depths
        .iter()
        .flat_map(|&d| (0..exp.n_circuits).map(move |c| (d, c)))
        .collect()
}

/// The compiled circuits `run_rb_experiment` executes, in record order.
pub fn rb_circuits(
    gates: &GateParams,
    exp: &RbExperiment,
    check: &ErasureCheckModel,
    seed: u64,
) -> Result<Vec<RbCircuit>> {
    check_rb(exp)?;
    rb_jobs(exp)
        .par_iter()
        .map(|&(d, c)| rb_circuit(gates, exp, check, seed, d, c))
        .collect()
}

/// Random Clifford circuits at each depth. Circuits alternate their target
/// between |1L⟩ and |0L⟩ to symmetrize readout errors.
pub fn run_rb_experiment(
    exec: &dyn CircuitExecutor,
    gates: &GateParams,
    exp: &RbExperiment,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    check_rb(exp)?;
    let chunks = rb_jobs(exp)
        .par_iter()
        .map(|&(depth, c)| {
            let circ = rb_circuit(gates, exp, exec.check_model(), seed, depth, c)?;
            let mut recs = exec.run_circuit(
                &circ.schedule,
                &shot_seeds(seed, depth as u64, c as u64, exp.n_shots),
            )?;
            tag(&mut recs, depth as f64, c as u32, Some(circ.expected));
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// One point of a generic sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub x: f64,
    pub schedule: Schedule,
    pub expected: Option<[u8; 2]>,
}

/// Runs `n_shots` of every point; the point index doubles as circuit index.
pub fn run_sweep(
    exec: &dyn CircuitExecutor,
    points: &[SweepPoint],
    n_shots: usize,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    let chunks = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let mut recs =
                exec.run_circuit(&p.schedule, &shot_seeds(seed, k as u64, 0, n_shots))?;
            tag(&mut recs, p.x, k as u32, p.expected);
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}
