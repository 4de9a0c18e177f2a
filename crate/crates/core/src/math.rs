//! Numerical kernels shared by the mixture family and the models: log-domain
//! reductions, SPD factorization with a jitter ladder, Gaussian densities and
//! draws, and the standard normal CDF/quantile pair.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal jitter multipliers tried, in order, after a plain factorization fails.
pub const JITTER_LADDER: [f64; 4] = [1e-10, 1e-8, 1e-6, 1e-4];

/// `log Σ exp(v_i)` by max-shift.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyInput)?;
    if max == f64::NEG_INFINITY || max == f64::INFINITY || max.is_nan() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Normalizes log-weights in place into linear weights summing to one and
/// returns the log normalizer. All-`-inf` input yields `-inf` and leaves
/// every weight at zero.
pub fn normalize_log_weights(log_weights: &[f64], out: &mut Vec<f64>) -> Result<f64> {
    let lse = log_sum_exp(log_weights)?;
    out.clear();
    if lse == f64::NEG_INFINITY {
        out.resize(log_weights.len(), 0.0);
        return Ok(lse);
    }
    out.extend(log_weights.iter().map(|lw| (lw - lse).exp()));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
    Ok(lse)
}

/// A symmetric positive-definite matrix with its cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
    jitter: f64,
}

impl SpdMatrix {
    /// Factorizes `matrix`, falling back to the jitter ladder.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        cholesky(matrix)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::EmptyInput);
        }
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        SpdMatrix {
            entries: DMatrix::from_diagonal_element(dim, dim, scale),
            chol: DMatrix::from_diagonal_element(dim, dim, scale.sqrt()),
            log_det: dim as f64 * scale.ln(),
            jitter: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular factor `L` with `L Lᵀ = entries` (entries include any jitter).
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal jitter that was added to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let p = self.dim();
        (0..p)
            .map(|i| (0..p).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }

    /// Squared Mahalanobis norm `‖L⁻¹ v‖²` by forward substitution.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> f64 {
        let p = self.dim();
        debug_assert_eq!(v.len(), p);
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if p <= 16 {
            &mut y[..p]
        } else {
            heap = vec![0.0; p];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..p {
            let mut s = v[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * y[j];
            }
            y[i] = s / self.chol[(i, i)];
            acc += y[i] * y[i];
        }
        acc
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Cholesky factorization with the diagonal jitter ladder `ε·mean(diag)`.
pub fn cholesky(matrix: DMatrix<f64>) -> Result<SpdMatrix> {
    let p = matrix.nrows();
    if p == 0 {
        return Err(Error::EmptyInput);
    }
    if matrix.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: matrix.ncols(),
        });
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let tol = 1e-12 * (1.0 + max_abs(&matrix));
    for i in 0..p {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > tol {
                return Err(Error::invalid("matrix is not symmetric"));
            }
        }
    }

    let mean_diag = matrix.diagonal().mean();
    let attempts = std::iter::once(0.0).chain(
        JITTER_LADDER
            .iter()
            .filter(|_| mean_diag > 0.0)
            .map(|eps| eps * mean_diag),
    );
    for jitter in attempts {
        let mut a = matrix.clone();
        for i in 0..p {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = nalgebra::Cholesky::new(a.clone()) {
            let chol = ch.unpack();
            if chol.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                continue;
            }
            if jitter > 0.0 {
                warn!("covariance factorized with diagonal jitter {jitter:e}");
            }
            let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            return Ok(SpdMatrix {
                entries: a,
                chol,
                log_det,
                jitter,
            });
        }
    }
    Err(Error::NotPositiveDefinite)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Log-density of `N(mean, cov)` at `point`.
pub fn mvn_log_pdf(point: &[f64], mean: &[f64], cov: &SpdMatrix) -> Result<f64> {
    check_dims(cov.dim(), point.len())?;
    check_dims(cov.dim(), mean.len())?;
    Ok(mvn_log_pdf_unchecked(point, mean, cov))
}

pub(crate) fn mvn_log_pdf_unchecked(point: &[f64], mean: &[f64], cov: &SpdMatrix) -> f64 {
    let p = point.len();
    let mut diff = [0.0f64; 16];
    let q = if p <= 16 {
        for i in 0..p {
            diff[i] = point[i] - mean[i];
        }
        cov.mahalanobis_sq(&diff[..p])
    } else {
        let d: Vec<f64> = point.iter().zip(mean).map(|(x, m)| x - m).collect();
        cov.mahalanobis_sq(&d)
    };
    -0.5 * (p as f64 * LN_2PI + cov.log_det() + q)
}

/// `mean + L z` for a given standard-normal vector `z`.
pub fn mvn_transform(mean: &[f64], cov: &SpdMatrix, z: &[f64]) -> Vec<f64> {
    let p = mean.len();
    let l = cov.chol();
    (0..p)
        .map(|i| mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>())
        .collect()
}

/// One draw from `N(mean, cov)`.
pub fn mvn_sample<R: Rng + ?Sized>(mean: &[f64], cov: &SpdMatrix, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    mvn_transform(mean, cov, &z)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

// Lower half only (u <= 0.5), where erfc of the refinement step is accurate.
fn lower_quantile(u: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    };
    // Halley step against the exact CDF.
    let e = normal_cdf(x) - u;
    let t = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - t / (1.0 + 0.5 * x * t)
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1)`.
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!(
            "normal quantile requires u in (0,1), got {u}"
        )));
    }
    Ok(if u > 0.5 {
        -lower_quantile(1.0 - u)
    } else {
        lower_quantile(u)
    })
}
