//! Reference samplers and distances used to check MPMC-IL output.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::model::{GkAbcModel, TargetModel};
use crate::par::map_indexed;
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    AbcRejection,
    ExactMixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub draws: Vec<Vec<f64>>,
    pub method: SampleMethod,
    /// Accepted fraction of proposals (ABC only).
    pub acceptance_rate: Option<f64>,
    pub proposals: usize,
}

impl ReferenceSample {
    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[k]).collect()
    }

    /// CSV with header `theta_1,...,theta_p`, one row per draw.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_draws_csv(&self.draws, writer)
    }
}

pub fn write_draws_csv<W: Write>(draws: &[Vec<f64>], writer: W) -> Result<()> {
    let p = draws.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=p).map(|k| format!("theta_{k}")))?;
    for d in draws {
        w.write_record(d.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a reference CSV written by [`ReferenceSample::write_csv`].
pub fn read_draws_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(reader);
    let p = r.headers()?.len();
    if p == 0 {
        return Err(Error::Format("reference CSV has no columns".into()));
    }
    let mut draws = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Format(format!("row {}: {e}", line + 2)))?;
        if row.len() != p {
            return Err(Error::Format(format!("row {}: expected {p} fields", line + 2)));
        }
        draws.push(row);
    }
    Ok(draws)
}

fn abc_chunk(model: &GkAbcModel, start: usize, len: usize, stream: &SeedStream) -> Vec<Option<Vec<f64>>> {
    let log_max = model.log_kernel_max();
    map_indexed(len, |j| {
        let mut rng = stream.child((start + j) as u64).rng();
        let (theta, _) = model.prior().sample_one(&mut rng);
        let lpsi = model.log_psi(&theta, &mut rng);
        let u: f64 = rng.sample(Open01);
        (u.ln() < lpsi - log_max).then_some(theta)
    })
}

/// ABC acceptance-rejection with prior proposals and the analytic kernel
/// bound as envelope: `M_proposals` proposals, all accepted draws returned.
pub fn abc_rejection(model: &GkAbcModel, m_proposals: usize, stream: &SeedStream) -> Result<ReferenceSample> {
    let draws: Vec<Vec<f64>> = abc_chunk(model, 0, m_proposals, stream).into_iter().flatten().collect();
    finish_abc(draws, m_proposals)
}

/// Like [`abc_rejection`] but stops as soon as `target` draws are accepted
/// or `budget` proposals are spent. Proposal `i` always uses the same
/// substream, so the result matches a single long run truncated at `target`.
pub fn abc_rejection_until(
    model: &GkAbcModel,
    target: usize,
    budget: usize,
    stream: &SeedStream,
) -> Result<ReferenceSample> {
    let mut draws = Vec::new();
    let mut used = 0;
    let mut chunk = target.clamp(1, 1 << 16);
    while used < budget && draws.len() < target {
        let len = chunk.min(budget - used);
        for (j, d) in abc_chunk(model, used, len, stream).into_iter().enumerate() {
            if let Some(theta) = d {
                draws.push(theta);
                if draws.len() == target {
                    used += j + 1;
                    return finish_abc(draws, used);
                }
            }
        }
        used += len;
        chunk = (chunk * 2).min(1 << 20);
    }
    finish_abc(draws, used)
}

fn finish_abc(draws: Vec<Vec<f64>>, proposals: usize) -> Result<ReferenceSample> {
    if draws.is_empty() {
        return Err(Error::NoAcceptances { proposals });
    }
    Ok(ReferenceSample {
        acceptance_rate: Some(draws.len() as f64 / proposals as f64),
        draws,
        method: SampleMethod::AbcRejection,
        proposals,
    })
}

/// Exact two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let cmp = |x: &f64, y: &f64| x.total_cmp(y);
    a.sort_by(cmp);
    b.sort_by(cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample KS statistic of `a` against a continuous CDF.
pub fn ks_against_cdf(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut a = a.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    let n = a.len() as f64;
    Ok(a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

/// Weighted mean and covariance `Σ w (x − m)(x − m)ᵀ` for normalized weights.
pub fn weighted_moments(points: &[Vec<f64>], weights: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let p = points[0].len();
    let mut mean = vec![0.0; p];
    for (x, w) in points.iter().zip(weights) {
        if x.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: x.len() });
        }
        for k in 0..p {
            mean[k] += w * x[k];
        }
    }
    let mut cov = DMatrix::zeros(p, p);
    for (x, w) in points.iter().zip(weights) {
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] += w * (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    Ok((mean, cov))
}

/// `M` draws from the mixture projected onto one coordinate.
pub fn mixture_marginal_sample(
    params: &MixtureParams,
    coordinate: usize,
    m: usize,
    stream: &SeedStream,
) -> Result<Vec<f64>> {
    if coordinate >= params.dim() {
        return Err(Error::invalid(format!(
            "coordinate {coordinate} out of range for dimension {}",
            params.dim()
        )));
    }
    let mut rng = stream.rng();
    Ok((0..m).map(|_| params.sample_one(&mut rng).0[coordinate]).collect())
}

/// Joint draws from the mixture, as a reference sample.
pub fn mixture_reference(params: &MixtureParams, m: usize, stream: &SeedStream) -> ReferenceSample {
    let mut rng = stream.rng();
    ReferenceSample {
        draws: params.mixture_sample(m, &mut rng).0,
        method: SampleMethod::ExactMixture,
        acceptance_rate: None,
        proposals: m,
    }
}
