//! Experiment builders and shot execution.

pub mod builders;
pub mod check;
pub mod clifford;
pub mod executor;
pub mod experiments;
pub mod logical;
pub mod readout;
pub mod system;

pub use builders::{
    build_cpmg, build_echo_with_checks, build_initialization, build_ramsey, build_x90_train,
    compile_rb, CompileMode, GateParams, ScheduleBuilder,
};
pub use check::{ErasureCheckModel, PairState};
pub use clifford::{clifford_table, rb_generate, CliffordElement, CliffordOp, RbSequence};
pub use executor::{
    ChannelExecutor, CircuitExecutor, FrequencyNoise, GapModel, GapTelegraph, NoiseConfig,
    TrajectoryExecutor,
};
pub use experiments::{
    rb_circuits, run_rb_experiment, run_sweep, RbCircuit, RbExperiment, SweepPoint,
};
pub use readout::{final_readout, ReadoutModel};
pub use system::{DualRailSystem, ErasureNoise};
