//! Posterior specifications: a prior log-density plus a generator of
//! nonnegative unbiased likelihood estimates `Ψ`, reported on the log scale.

use crate::rng::StreamRng;

pub mod gk;
pub mod glmm;
pub mod tractable;

pub use gk::{gk_default_prior, gk_quantile, gk_simulate, octile_summary, GkAbcModel, GkParams, SummaryMode};
pub use glmm::{glmm_log_prior, GlmmData, GlmmModel, Individual, SynthSpec};
pub use tractable::TractableTarget;

/// A posterior known through its prior and an unbiased likelihood estimator.
///
/// `log_psi` returns the log of one realization of `Ψ(X; y_obs, θ) ≥ 0`;
/// `-inf` encodes `Ψ = 0`. NaN and `+inf` are treated as invalid estimates
/// by the engine. Implementations must draw all randomness from `rng` so that
/// particle streams stay reproducible.
pub trait TargetModel: Sync {
    fn dim(&self) -> usize;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn log_psi(&self, theta: &[f64], rng: &mut StreamRng) -> f64;
}

impl<T: TargetModel + ?Sized> TargetModel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        (**self).log_prior(theta)
    }

    fn log_psi(&self, theta: &[f64], rng: &mut StreamRng) -> f64 {
        (**self).log_psi(theta, rng)
    }
}

impl<T: TargetModel + ?Sized> TargetModel for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        (**self).log_prior(theta)
    }

    fn log_psi(&self, theta: &[f64], rng: &mut StreamRng) -> f64 {
        (**self).log_psi(theta, rng)
    }
}
