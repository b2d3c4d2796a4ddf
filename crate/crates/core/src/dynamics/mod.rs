//! Time evolution: master equation, trajectories and the classical erasure chain.

pub mod chain;
pub mod hamiltonian;
pub mod integrate;
pub mod lindblad;
pub mod record;
pub mod schedule;
pub mod trajectory;

pub use hamiltonian::TimeDependentHamiltonian;
pub use integrate::OdeOptions;
pub use lindblad::lindblad_evolve;
pub use record::{
    ChannelLabel, CheckFlag, CheckOutcome, CollapseChannel, FinalLabel, JumpEvent, ShotRecord,
};
pub use schedule::{Channel, Envelope, PulseSegment, Schedule, Tile};
pub use trajectory::{
    trajectory_run, NullObserver, ShotObserver, TrajectoryEngine, TrajectoryResult,
};
