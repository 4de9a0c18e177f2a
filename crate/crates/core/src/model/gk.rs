//! g-and-k distribution and its ABC likelihood estimator.
//!
//! The model works in the unconstrained parametrization
//! `θ = (A, log B, g, log(k + 1/2))`.

use std::f64::consts::PI;

use log::warn;
use rand::Rng;
use rand_distr::Open01;

use super::TargetModel;
use crate::error::{Error, Result};
use crate::math::{std_normal_quantile, SpdMatrix};
use crate::mixture::MixtureParams;
use crate::rng::StreamRng;

/// Constrained g-and-k parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GkParams {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub k: f64,
}

impl GkParams {
    pub fn new(a: f64, b: f64, g: f64, k: f64) -> Result<Self> {
        let p = GkParams { a, b, g, k };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if !(self.b > 0.0) || !(self.k > -0.5) || !self.a.is_finite() || !self.g.is_finite() {
            return Err(Error::invalid(format!(
                "g-and-k requires B > 0 and k > -1/2, got {self:?}"
            )));
        }
        if !self.b.is_finite() || !self.k.is_finite() {
            return Err(Error::invalid("g-and-k parameters must be finite"));
        }
        Ok(())
    }

    pub fn from_unconstrained(theta: &[f64]) -> Self {
        GkParams {
            a: theta[0],
            b: theta[1].exp(),
            g: theta[2],
            k: theta[3].exp() - 0.5,
        }
    }

    pub fn to_unconstrained(&self) -> [f64; 4] {
        [self.a, self.b.ln(), self.g, (self.k + 0.5).ln()]
    }

    /// Quantile map evaluated at a standard-normal quantile `z`.
    #[inline]
    pub fn quantile_at_z(&self, z: f64) -> f64 {
        // (1 - e^{-gz}) / (1 + e^{-gz}) == tanh(gz/2); exact 0 at g = 0.
        let skew = 1.0 + 0.8 * (0.5 * self.g * z).tanh();
        let kurt = if self.k == 0.0 { 1.0 } else { (1.0 + z * z).powf(self.k) };
        self.a + self.b * skew * kurt * z
    }
}

pub fn gk_quantile(u: f64, a: f64, b: f64, g: f64, k: f64) -> Result<f64> {
    let p = GkParams::new(a, b, g, k)?;
    Ok(p.quantile_at_z(std_normal_quantile(u)?))
}

fn draw_gk<R: Rng + ?Sized>(p: &GkParams, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    p.quantile_at_z(std_normal_quantile(u).expect("open-interval uniform"))
}

/// `n` draws by the quantile transform of `Uniform(0,1)` variates.
pub fn gk_simulate<R: Rng + ?Sized>(n: usize, params: &GkParams, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| draw_gk(params, rng)).collect()
}

/// Empirical quantile at probability `prob` from sorted data, by linear
/// interpolation between order statistics at position `(n − 1)·prob`.
fn sorted_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Octile-based robust summaries `(S_A, S_B, S_g, S_k)`.
pub fn octile_summary(y: &[f64]) -> Result<[f64; 4]> {
    if y.len() < 8 {
        return Err(Error::invalid(format!(
            "octile summary needs at least 8 values, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateSummary);
    }
    let mut s = y.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let e: Vec<f64> = (1..=7).map(|j| sorted_quantile(&s, j as f64 / 8.0)).collect();
    let sb = e[5] - e[1];
    if !(sb > 0.0) || !sb.is_finite() {
        return Err(Error::DegenerateSummary);
    }
    Ok([
        e[3],
        sb,
        (e[5] + e[1] - 2.0 * e[3]) / sb,
        (e[6] - e[4] + e[2] - e[0]) / sb,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SummaryMode {
    /// `S(y) = y`, compared coordinate by coordinate.
    Identity,
    Octile,
}

/// The 4-component Gaussian-mixture prior centred on `θ₀ = (3, 0, 2, 0)`.
pub fn gk_default_prior() -> MixtureParams {
    const THETA0: [f64; 4] = [3.0, 0.0, 2.0, 0.0];
    const R: [[f64; 4]; 4] = [
        [-0.2302, 0.9273, 1.3218, 0.3780],
        [0.0885, 0.8739, -0.2305, -1.0796],
        [-0.8671, 0.2077, -0.0338, 0.4578],
        [0.3725, -1.0748, 0.2789, 0.5326],
    ];
    let means = R
        .iter()
        .map(|row| THETA0.iter().zip(row).map(|(t, r)| t + r).collect())
        .collect();
    MixtureParams::new(vec![0.25; 4], means, vec![SpdMatrix::identity(4); 4])
        .expect("valid prior")
}

/// ABC posterior for g-and-k data with an isotropic Gaussian kernel of
/// bandwidth `h` applied to each summary coordinate.
#[derive(Debug, Clone)]
pub struct GkAbcModel {
    y_obs: Vec<f64>,
    s_obs: Vec<f64>,
    h: f64,
    mode: SummaryMode,
    prior: MixtureParams,
    log_kernel_max: f64,
}

impl GkAbcModel {
    pub fn new(y_obs: Vec<f64>, h: f64, mode: SummaryMode, prior: MixtureParams) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid(format!("bandwidth h must be > 0, got {h}")));
        }
        if y_obs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if prior.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: prior.dim(),
            });
        }
        let s_obs = match mode {
            SummaryMode::Identity => y_obs.clone(),
            SummaryMode::Octile => octile_summary(&y_obs)?.to_vec(),
        };
        let d = s_obs.len() as f64;
        Ok(GkAbcModel {
            log_kernel_max: -0.5 * d * (2.0 * PI * h * h).ln(),
            y_obs,
            s_obs,
            h,
            mode,
            prior,
        })
    }

    pub fn y_obs(&self) -> &[f64] {
        &self.y_obs
    }

    pub fn observed_summary(&self) -> &[f64] {
        &self.s_obs
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn mode(&self) -> SummaryMode {
        self.mode
    }

    pub fn prior(&self) -> &MixtureParams {
        &self.prior
    }

    /// `-(d/2) log(2πh²)`, the kernel value at zero distance.
    pub fn log_kernel_max(&self) -> f64 {
        self.log_kernel_max
    }

    /// Log Gaussian kernel between the observed and a simulated summary.
    pub fn log_kernel(&self, simulated_summary: &[f64]) -> f64 {
        let dist2: f64 = self
            .s_obs
            .iter()
            .zip(simulated_summary)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.log_kernel_from_dist2(dist2)
    }

    fn log_kernel_from_dist2(&self, dist2: f64) -> f64 {
        if dist2.is_nan() {
            return f64::NEG_INFINITY;
        }
        self.log_kernel_max - dist2 / (2.0 * self.h * self.h)
    }
}

impl TargetModel for GkAbcModel {
    fn dim(&self) -> usize {
        4
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior
            .mixture_log_density(theta)
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn log_psi(&self, theta: &[f64], rng: &mut StreamRng) -> f64 {
        let params = GkParams::from_unconstrained(theta);
        if params.check().is_err() {
            return f64::NEG_INFINITY;
        }
        match self.mode {
            SummaryMode::Identity => {
                let mut dist2 = 0.0;
                for y in &self.y_obs {
                    let x = draw_gk(&params, rng);
                    dist2 += (y - x) * (y - x);
                }
                self.log_kernel_from_dist2(dist2)
            }
            SummaryMode::Octile => {
                let x = gk_simulate(self.y_obs.len(), &params, rng);
                match octile_summary(&x) {
                    Ok(s) => self.log_kernel(&s),
                    Err(_) => {
                        warn!("degenerate simulated summary at theta = {theta:?}; psi = 0");
                        f64::NEG_INFINITY
                    }
                }
            }
        }
    }
}
