//! Adaptive mixture population Monte Carlo with intractable likelihoods
//! (MPMC-IL): a Gaussian-mixture variational approximation fitted by
//! self-normalized importance sampling, where the target is only reachable
//! through a nonnegative unbiased likelihood estimator.

pub mod controller;
pub mod engine;
pub mod error;
pub mod math;
pub mod mixture;
pub mod model;
pub mod oracle;
pub mod par;
pub mod rng;

pub use controller::{
    prune_components, propose_component, run_adaptive, window_should_stop, AdaptiveConfig, EventKind,
    Proposal, RunFailure, RunTrace, StopReason, TraceEvent, TraceRecord, WindowRule,
};
pub use engine::{
    estimate_objective, exact_em_step_1d, mpmc_step, quadrature_objective, sample_batch, smoothed_objective,
    update_parameters, IterationBatch, ObjectivePoint, QuadratureGrid,
};
pub use error::{Error, Result};
pub use math::{cholesky, log_sum_exp, mvn_log_pdf, mvn_sample, normal_cdf, std_normal_quantile, SpdMatrix};
pub use mixture::{MixtureParams, MixtureSnapshot, Responsibilities};
pub use model::TargetModel;
pub use rng::{SeedStream, StreamRng};
