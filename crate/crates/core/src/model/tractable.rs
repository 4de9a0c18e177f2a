//! Test target with a known posterior: flat prior on a box and a mixture
//! density observed through unit-mean log-normal multiplicative noise.

use rand_distr::{Distribution, StandardNormal};

use super::TargetModel;
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct TractableTarget {
    truth: MixtureParams,
    noise_cv: f64,
    bounds: Vec<(f64, f64)>,
    log_volume: f64,
    noise_sd: f64,
}

impl TractableTarget {
    pub fn new(truth: MixtureParams, noise_cv: f64, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if !(noise_cv >= 0.0) || !noise_cv.is_finite() {
            return Err(Error::invalid(format!("noise_cv must be >= 0, got {noise_cv}")));
        }
        if bounds.len() != truth.dim() {
            return Err(Error::DimensionMismatch {
                expected: truth.dim(),
                found: bounds.len(),
            });
        }
        if bounds.iter().any(|(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::invalid("box bounds must satisfy lo < hi"));
        }
        let log_volume = bounds.iter().map(|(lo, hi)| (hi - lo).ln()).sum();
        Ok(TractableTarget {
            noise_sd: (1.0 + noise_cv * noise_cv).ln().sqrt(),
            truth,
            noise_cv,
            bounds,
            log_volume,
        })
    }

    pub fn truth(&self) -> &MixtureParams {
        &self.truth
    }

    pub fn noise_cv(&self) -> f64 {
        self.noise_cv
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn true_log_density(&self, theta: &[f64]) -> f64 {
        self.truth
            .mixture_log_density(theta)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

impl TargetModel for TractableTarget {
    fn dim(&self) -> usize {
        self.truth.dim()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let inside = theta
            .iter()
            .zip(&self.bounds)
            .all(|(x, (lo, hi))| x >= lo && x <= hi);
        if inside {
            -self.log_volume
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_psi(&self, theta: &[f64], rng: &mut StreamRng) -> f64 {
        let exact = self.true_log_density(theta);
        if self.noise_sd == 0.0 {
            return exact;
        }
        let z: f64 = StandardNormal.sample(rng);
        exact + self.noise_sd * z - 0.5 * self.noise_sd * self.noise_sd
    }
}
