//! One MPMC-IL update cycle with a fixed number of components: draw
//! particles from the current mixture, attach one likelihood estimate each,
//! self-normalize the importance weights, and refit `(α, μ, Σ)`.
//!
//! Per-particle work runs through [`crate::par::map_indexed`]; every
//! reduction over particles is a serial sum in index order, so results do
//! not depend on the thread count.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{normalize_log_weights, SpdMatrix};
use crate::mixture::{normalize_row, MixtureParams, Responsibilities};
use crate::model::TargetModel;
use crate::par::map_indexed;
use crate::rng::SeedStream;

/// Components whose updated weight falls below this keep their previous `(μ, Σ)`.
pub const FROZEN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct IterationBatch {
    pub particles: Vec<Vec<f64>>,
    /// Component each particle was drawn from.
    pub components: Vec<usize>,
    pub log_prior: Vec<f64>,
    pub log_psi: Vec<f64>,
    /// `log q(θ_i)` under the proposal mixture.
    pub log_proposal: Vec<f64>,
    pub log_unnorm_weights: Vec<f64>,
    pub norm_weights: Vec<f64>,
    pub responsibilities: Responsibilities,
    pub ess: f64,
}

impl IterationBatch {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Self-normalized estimate of the posterior mean.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let p = self.particles[0].len();
        let mut m = vec![0.0; p];
        for (w, x) in self.norm_weights.iter().zip(&self.particles) {
            for k in 0..p {
                m[k] += w * x[k];
            }
        }
        m
    }
}

struct Particle {
    theta: Vec<f64>,
    component: usize,
    log_prior: f64,
    log_psi: f64,
    log_q: f64,
    resp: Vec<f64>,
}

/// Draws `n` particles from `params` and weights them against `model`.
pub fn sample_batch<M: TargetModel + ?Sized>(
    params: &MixtureParams,
    model: &M,
    n: usize,
    stream: &SeedStream,
) -> Result<IterationBatch> {
    if n < 2 {
        return Err(Error::invalid("a batch needs at least 2 particles"));
    }
    if model.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: params.dim(),
        });
    }
    let d = params.n_components();
    let particles = map_indexed(n, |i| {
        let mut rng = stream.child(i as u64).rng();
        let (theta, component) = params.sample_one(&mut rng);
        let mut resp = vec![0.0; d];
        params.joint_log_densities(&theta, &mut resp);
        let log_q = normalize_row(&mut resp);
        let log_prior = model.log_prior(&theta);
        let log_psi = if log_prior == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            model.log_psi(&theta, &mut rng)
        };
        Particle {
            theta,
            component,
            log_prior,
            log_psi,
            log_q,
            resp,
        }
    });

    let mut batch = IterationBatch {
        particles: Vec::with_capacity(n),
        components: Vec::with_capacity(n),
        log_prior: Vec::with_capacity(n),
        log_psi: Vec::with_capacity(n),
        log_proposal: Vec::with_capacity(n),
        log_unnorm_weights: Vec::with_capacity(n),
        norm_weights: Vec::with_capacity(n),
        responsibilities: Responsibilities::from_raw(0, d, Vec::new()),
        ess: 0.0,
    };
    let mut resp = Vec::with_capacity(n * d);
    for (i, p) in particles.into_iter().enumerate() {
        if p.log_psi.is_nan() || p.log_psi == f64::INFINITY || p.log_prior.is_nan() {
            return Err(Error::InvalidEstimate {
                index: i,
                value: p.log_psi,
            });
        }
        let lw = if p.log_q == f64::NEG_INFINITY {
            warn!("particle {i} has zero proposal density; dropping it");
            f64::NEG_INFINITY
        } else {
            p.log_prior + p.log_psi - p.log_q
        };
        batch.log_unnorm_weights.push(lw);
        batch.log_prior.push(p.log_prior);
        batch.log_psi.push(p.log_psi);
        batch.log_proposal.push(p.log_q);
        batch.components.push(p.component);
        batch.particles.push(p.theta);
        resp.extend_from_slice(&p.resp);
    }
    batch.responsibilities = Responsibilities::from_raw(n, d, resp);

    let lse = normalize_log_weights(&batch.log_unnorm_weights, &mut batch.norm_weights)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::ZeroTotalWeight(Box::new(batch)));
    }
    batch.ess = 1.0 / batch.norm_weights.iter().map(|w| w * w).sum::<f64>();
    Ok(batch)
}

/// Closed-form Gaussian-mixture refit from a weighted batch.
pub fn update_parameters(batch: &IterationBatch, params: &MixtureParams) -> MixtureParams {
    let d_count = params.n_components();
    let p = params.dim();
    let w = &batch.norm_weights;
    let rho = &batch.responsibilities;
    let mut weights = Vec::with_capacity(d_count);
    let mut means = Vec::with_capacity(d_count);
    let mut covs = Vec::with_capacity(d_count);

    for d in 0..d_count {
        let alpha: f64 = (0..batch.len()).map(|i| w[i] * rho.get(i, d)).sum();
        weights.push(alpha);
        if !(alpha >= FROZEN_WEIGHT) {
            means.push(params.means()[d].clone());
            covs.push(params.covs()[d].clone());
            continue;
        }
        let mut mu = vec![0.0; p];
        for (i, theta) in batch.particles.iter().enumerate() {
            let c = w[i] * rho.get(i, d);
            if c == 0.0 {
                continue;
            }
            for k in 0..p {
                mu[k] += c * theta[k];
            }
        }
        mu.iter_mut().for_each(|m| *m /= alpha);

        let mut sigma = DMatrix::<f64>::zeros(p, p);
        for (i, theta) in batch.particles.iter().enumerate() {
            let c = w[i] * rho.get(i, d);
            if c == 0.0 {
                continue;
            }
            for a in 0..p {
                let da = theta[a] - mu[a];
                for b in 0..=a {
                    sigma[(a, b)] += c * da * (theta[b] - mu[b]);
                }
            }
        }
        for a in 0..p {
            for b in 0..=a {
                let v = sigma[(a, b)] / alpha;
                sigma[(a, b)] = v;
                sigma[(b, a)] = v;
            }
        }
        let cov = match SpdMatrix::new(sigma) {
            Ok(c) => c,
            Err(_) => {
                warn!("component {d}: updated covariance not positive definite; keeping previous");
                params.covs()[d].clone()
            }
        };
        means.push(mu);
        covs.push(cov);
    }

    let total: f64 = weights.iter().sum();
    debug_assert!((total - 1.0).abs() < 1e-9, "weights sum to {total}");
    weights.iter_mut().for_each(|a| *a /= total);
    MixtureParams::from_parts_unchecked(weights, means, covs)
}

/// `Σ_i w_i log q(θ_i)`; zero-weight particles are skipped.
pub fn estimate_objective(batch: &IterationBatch, params: &MixtureParams) -> f64 {
    batch
        .norm_weights
        .iter()
        .zip(&batch.particles)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, theta)| {
            w * params
                .mixture_log_density(theta)
                .expect("batch drawn from params")
        })
        .sum()
}

/// Objective value at one iteration of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    /// Global iteration index (0-based).
    pub iteration: usize,
    /// Update round the iteration belongs to (0-based).
    pub window: usize,
    /// Position inside the window (1-based).
    pub t: usize,
    pub value: f64,
    pub smoothed: f64,
}

/// Smoothed objective `L̃_t` over a window's history `L_1..L_t`: the mean of
/// the last `s` values once `t ≥ s`, otherwise `L_t` itself.
pub fn smoothed_objective(history: &[f64], s: usize) -> f64 {
    let t = history.len();
    assert!(t >= 1, "smoothing needs at least one value");
    if s >= 1 && t >= s {
        history[t - s..].iter().sum::<f64>() / s as f64
    } else {
        history[t - 1]
    }
}

/// One full iteration: the batch, its objective `L_t`, and the refitted mixture.
pub fn mpmc_step<M: TargetModel + ?Sized>(
    params: &MixtureParams,
    model: &M,
    n: usize,
    stream: &SeedStream,
) -> Result<(IterationBatch, f64, MixtureParams)> {
    let batch = sample_batch(params, model, n, stream)?;
    let objective = estimate_objective(&batch, params);
    let next = update_parameters(&batch, params);
    Ok((batch, objective, next))
}

/// Deterministic quadrature rule on a line.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Composite Simpson rule with `n` (odd, ≥ 3) nodes on `[lo, hi]`.
    pub fn simpson(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 || n % 2 == 0 || !(hi > lo) {
            return Err(Error::invalid("Simpson grid needs odd n >= 3 and lo < hi"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let nodes = (0..n).map(|k| lo + k as f64 * h).collect();
        let weights = (0..n)
            .map(|k| {
                let c = if k == 0 || k == n - 1 {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        Ok(QuadratureGrid { nodes, weights })
    }
}

fn grid_target(target: &dyn Fn(f64) -> f64, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let vals: Vec<f64> = grid.nodes.iter().map(|&x| target(x)).collect();
    let mass: f64 = vals.iter().zip(&grid.weights).map(|(v, w)| v * w).sum();
    if !(mass >= 0.999) {
        return Err(Error::GridTooNarrow { mass });
    }
    Ok(vals)
}

/// Population-level objective `∫ log q(θ) π(θ) dθ` by quadrature.
pub fn quadrature_objective(
    params: &MixtureParams,
    target: &dyn Fn(f64) -> f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let vals = grid_target(target, grid)?;
    let mut total = 0.0;
    for ((x, pi), w) in grid.nodes.iter().zip(&vals).zip(&grid.weights) {
        let c = pi * w;
        if c != 0.0 {
            total += c * params.mixture_log_density(&[*x])?;
        }
    }
    Ok(total)
}

/// Exact (sampling-free) EM update on a 1-D target by quadrature.
pub fn exact_em_step_1d(
    params: &MixtureParams,
    target: &dyn Fn(f64) -> f64,
    grid: &QuadratureGrid,
) -> Result<MixtureParams> {
    if params.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: params.dim(),
        });
    }
    let vals = grid_target(target, grid)?;
    let d_count = params.n_components();
    let mut alpha = vec![0.0; d_count];
    let mut first = vec![0.0; d_count];
    let mut rows = Vec::with_capacity(grid.nodes.len());
    let mut row = vec![0.0; d_count];
    for ((x, pi), w) in grid.nodes.iter().zip(&vals).zip(&grid.weights) {
        params.joint_log_densities(&[*x], &mut row);
        normalize_row(&mut row);
        let c = pi * w;
        for d in 0..d_count {
            alpha[d] += c * row[d];
            first[d] += c * row[d] * x;
        }
        rows.push(row.clone());
    }
    let mut means = Vec::with_capacity(d_count);
    let mut covs = Vec::with_capacity(d_count);
    for d in 0..d_count {
        if alpha[d] < FROZEN_WEIGHT {
            means.push(params.means()[d].clone());
            covs.push(params.covs()[d].clone());
            continue;
        }
        let mu = first[d] / alpha[d];
        let var: f64 = grid
            .nodes
            .iter()
            .zip(&vals)
            .zip(&grid.weights)
            .zip(&rows)
            .map(|(((x, pi), w), r)| pi * w * r[d] * (x - mu) * (x - mu))
            .sum::<f64>()
            / alpha[d];
        means.push(vec![mu]);
        covs.push(SpdMatrix::from_rows(&[vec![var]]).unwrap_or_else(|_| params.covs()[d].clone()));
    }
    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);
    Ok(MixtureParams::from_parts_unchecked(alpha, means, covs))
}
