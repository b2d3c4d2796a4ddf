//! Postselection, fits and derived metrics.

pub mod budget;
pub mod fit;
mod lm;
pub mod metrics;
pub mod postselect;
pub mod rb;
pub mod tracker;

pub use budget::{coherence_budget, BudgetInputs, CoherenceBudget};
pub use fit::{
    fit_damped_oscillation, fit_exponential, fit_exponential_weighted, fit_fringe, fit_rb_erasure,
    fit_rb_survival, fringe_coherence, FitModel, FitParam, FitResult, Offset,
};
pub use metrics::{
    check_fraction, coherence_function, dephasing_bound_per_check, dephasing_time, erasure_bias,
    gate_bias, missed_erasure_probability,
};
pub use postselect::{
    curve, postselect, wilson_interval, CurvePoint, PostselectionPolicy, Proportion,
};
pub use rb::{rb_analyze, Estimate, RbAnalysis};
pub use tracker::{telegraph_frequency_tracker, TelegraphTrack};
