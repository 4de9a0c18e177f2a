//! Random-intercept logistic regression with the averaged-importance
//! likelihood estimator
//! `p̂(y_i | θ) = (1/N_i) Σ_j p(y_i | α_i^{(j)}, θ)`, `α_i^{(j)} ~ N(0, τ²)`.
//!
//! `θ = (β₁, β₂, β₃, log τ²)` with predictor `β₁ + β₂·A_it + β₃·S_i + α_i`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TargetModel;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, LN_2PI};
use crate::rng::StreamRng;

/// Generator for the random-effect draws inside one likelihood estimate.
type InnerRng = rand_xoshiro::Xoshiro256PlusPlus;

const BETA_PRIOR_VAR: f64 = 50.0;
const TAU_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Stable identifier; the inner draws for an individual are keyed on it.
    pub id: u64,
    pub smoking: f64,
    pub ages: Vec<f64>,
    pub wheeze: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlmmData {
    pub individuals: Vec<Individual>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: u64,
    timepoint: u32,
    wheeze: u8,
    age_centered: f64,
    smoking: u8,
}

/// Generator settings for a synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub t: usize,
    pub beta: [f64; 3],
    pub tau2: f64,
    pub smoking_rate: f64,
}

impl GlmmData {
    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_rows(&self) -> usize {
        self.individuals.iter().map(|i| i.ages.len()).sum()
    }

    /// Reads the `id,timepoint,wheeze,age_centered,smoking` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["id", "timepoint", "wheeze", "age_centered", "smoking"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Format(format!(
                "expected header {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut individuals: Vec<Individual> = Vec::new();
        for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let line = line + 2;
            if row.wheeze > 1 || row.smoking > 1 {
                return Err(Error::Format(format!("line {line}: wheeze and smoking must be 0 or 1")));
            }
            let smoking = f64::from(row.smoking);
            match individuals.last_mut() {
                Some(ind) if ind.id == row.id => {
                    if ind.smoking != smoking {
                        return Err(Error::Format(format!(
                            "line {line}: smoking status changes within id {}",
                            row.id
                        )));
                    }
                    ind.ages.push(row.age_centered);
                    ind.wheeze.push(row.wheeze == 1);
                }
                last => {
                    let expected_id = last.map_or(1, |ind| ind.id + 1);
                    if row.id != expected_id {
                        return Err(Error::Format(format!(
                            "line {line}: ids must be contiguous from 1 (expected {expected_id}, got {})",
                            row.id
                        )));
                    }
                    individuals.push(Individual {
                        id: row.id,
                        smoking,
                        ages: vec![row.age_centered],
                        wheeze: vec![row.wheeze == 1],
                    });
                }
            }
        }
        if individuals.is_empty() {
            return Err(Error::Format("no data rows".into()));
        }
        Ok(GlmmData { individuals })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for ind in &self.individuals {
            for (t, (age, y)) in ind.ages.iter().zip(&ind.wheeze).enumerate() {
                w.serialize(CsvRow {
                    id: ind.id,
                    timepoint: t as u32 + 1,
                    wheeze: u8::from(*y),
                    age_centered: *age,
                    smoking: ind.smoking as u8,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Simulates a data set with ages centred as `A_ij = j − 3`.
    pub fn synthesize<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Self> {
        if spec.n == 0 || spec.t == 0 {
            return Err(Error::invalid("synthetic data needs n >= 1 and T >= 1"));
        }
        if !(spec.tau2 >= 0.0) || !(0.0..=1.0).contains(&spec.smoking_rate) {
            return Err(Error::invalid("need tau2 >= 0 and smoking_rate in [0,1]"));
        }
        let smoker = Bernoulli::new(spec.smoking_rate).expect("rate checked");
        let tau = spec.tau2.sqrt();
        let [b1, b2, b3] = spec.beta;
        let individuals = (1..=spec.n as u64)
            .map(|id| {
                let s = if smoker.sample(rng) { 1.0 } else { 0.0 };
                let z: f64 = rng.sample(StandardNormal);
                let alpha = tau * z;
                let ages: Vec<f64> = (1..=spec.t).map(|j| j as f64 - 3.0).collect();
                let wheeze = ages
                    .iter()
                    .map(|a| {
                        let l = b1 + b2 * a + b3 * s + alpha;
                        let p = 1.0 / (1.0 + (-l).exp());
                        rng.random::<f64>() < p
                    })
                    .collect();
                Individual {
                    id,
                    smoking: s,
                    ages,
                    wheeze,
                }
            })
            .collect();
        Ok(GlmmData { individuals })
    }
}

/// Independent `N(0, 50)` priors on β and `Gamma(1, rate 0.1)` on τ,
/// expressed as a density on `θ₄ = log τ²`.
pub fn glmm_log_prior(theta: &[f64]) -> f64 {
    let beta_part: f64 = theta[..3]
        .iter()
        .map(|b| -0.5 * (LN_2PI + BETA_PRIOR_VAR.ln()) - b * b / (2.0 * BETA_PRIOR_VAR))
        .sum();
    let half = 0.5 * theta[3];
    let tau = half.exp();
    // log p(τ) + log|dτ/dθ₄| with τ = exp(θ₄/2)
    let tau_part = TAU_RATE.ln() - TAU_RATE * tau + half + 0.5f64.ln();
    beta_part + tau_part
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const MAX_FAST_T: usize = 16;

#[derive(Debug, Clone)]
pub struct GlmmModel {
    data: GlmmData,
    inner_draws: usize,
}

impl GlmmModel {
    pub fn new(data: GlmmData, inner_draws: usize) -> Result<Self> {
        if inner_draws == 0 {
            return Err(Error::invalid("inner_draws N_i must be >= 1"));
        }
        if data.individuals.is_empty() {
            return Err(Error::EmptyInput);
        }
        if data.individuals.iter().any(|i| i.ages.is_empty() || i.ages.len() != i.wheeze.len()) {
            return Err(Error::invalid("every individual needs at least one observation"));
        }
        Ok(GlmmModel { data, inner_draws })
    }

    pub fn data(&self) -> &GlmmData {
        &self.data
    }

    pub fn inner_draws(&self) -> usize {
        self.inner_draws
    }

    /// Per-individual generator: keyed on the particle's base key and the id.
    fn individual_rng(base: u64, id: u64) -> InnerRng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&base.to_le_bytes());
        seed[8..16].copy_from_slice(&id.to_le_bytes());
        seed[16..24].copy_from_slice(&0x9E37_79B9_7F4A_7C15u64.to_le_bytes());
        InnerRng::from_seed(seed)
    }

    /// `log p̂_{N_i}(y_i | θ)` for one individual. `z` and `u` are scratch
    /// buffers of length `N_i`.
    fn log_lik_individual(
        &self,
        ind: &Individual,
        beta: [f64; 3],
        tau: f64,
        base: u64,
        z: &mut [f64],
        u: &mut [f64],
    ) -> f64 {
        let shift = beta[0] + beta[2] * ind.smoking;
        let t_len = ind.ages.len();
        let mut rng = Self::individual_rng(base, ind.id);
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if t_len <= MAX_FAST_T {
            if let Some(l) = fast_log_lik(ind, shift, beta[1], tau, z, u) {
                return l;
            }
        }
        // log-domain fallback over the same draws
        let lps: Vec<f64> = z
            .iter()
            .map(|&zj| {
                let alpha = tau * zj;
                ind.ages
                    .iter()
                    .zip(&ind.wheeze)
                    .map(|(age, &y)| {
                        let l = shift + beta[1] * age + alpha;
                        if y {
                            -softplus(-l)
                        } else {
                            -softplus(l)
                        }
                    })
                    .sum()
            })
            .collect();
        log_sum_exp(&lps).expect("N_i >= 1") - (z.len() as f64).ln()
    }
}

/// With `u = e^α` and `r_t = e^{-b_t}`, the likelihood of one individual is
/// `u^{n⁺} / (e^{Σ_{y=0} b_t} · Π_t (u + r_t))`; the product is a degree-T
/// polynomial evaluated by Horner's rule. `None` if any term leaves the
/// normal floating-point range.
fn fast_log_lik(ind: &Individual, shift: f64, slope: f64, tau: f64, z: &[f64], u: &mut [f64]) -> Option<f64> {
    let t_len = ind.ages.len();
    let mut poly = [0.0f64; MAX_FAST_T + 1];
    poly[0] = 1.0;
    let mut log_k = 0.0;
    let mut n_pos = 0;
    for (t, (age, &y)) in ind.ages.iter().zip(&ind.wheeze).enumerate() {
        let b = shift + slope * age;
        let r = (-b).exp();
        for j in (1..=t + 1).rev() {
            poly[j] += r * poly[j - 1];
        }
        if y {
            n_pos += 1;
        } else {
            log_k += b;
        }
    }
    let coeffs = &poly[1..=t_len];
    for (v, zj) in u.iter_mut().zip(z) {
        *v = (tau * zj).exp();
    }
    let mut total = 0.0;
    let mut ok = true;
    for &u in u.iter() {
        let mut den = 1.0;
        for c in coeffs {
            den = den * u + c;
        }
        let mut num = 1.0;
        for _ in 0..n_pos {
            num *= u;
        }
        let q = num / den;
        ok &= (q > 0.0) & (q < f64::INFINITY);
        total += q;
    }
    (ok && total.is_finite()).then(|| (total / z.len() as f64).ln() - log_k)
}

impl TargetModel for GlmmModel {
    fn dim(&self) -> usize {
        4
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        glmm_log_prior(theta)
    }

    fn log_psi(&self, theta: &[f64], rng: &mut StreamRng) -> f64 {
        let beta = [theta[0], theta[1], theta[2]];
        let tau = (0.5 * theta[3]).exp();
        if !tau.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let base: u64 = rng.random();
        let mut z = vec![0.0; self.inner_draws];
        let mut u = vec![0.0; self.inner_draws];
        let mut total = 0.0;
        for ind in &self.data.individuals {
            total += self.log_lik_individual(ind, beta, tau, base, &mut z, &mut u);
        }
        total
    }
}
