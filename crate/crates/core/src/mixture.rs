//! The Gaussian-mixture family `q(θ) = Σ_d α_d N(θ | μ_d, Σ_d)`.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, mvn_log_pdf_unchecked, mvn_sample, SpdMatrix};

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<SpdMatrix>,
}

/// Per-particle component posterior probabilities, row-major `N × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub(crate) fn from_raw(n: usize, d: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * d);
        Responsibilities { n, d, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, d: usize) -> f64 {
        self.values[i * self.d + d]
    }
}

/// JSON form of a mixture: `{D, weights, means, covs}` in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSnapshot {
    #[serde(rename = "D")]
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Vec<Vec<f64>>>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<SpdMatrix>) -> Result<Self> {
        let d = weights.len();
        if d == 0 {
            return Err(Error::EmptyInput);
        }
        if means.len() != d || covs.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: means.len().min(covs.len()),
            });
        }
        let p = means[0].len();
        if p == 0 {
            return Err(Error::invalid("mixture dimension must be positive"));
        }
        for (m, c) in means.iter().zip(&covs) {
            if m.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: m.len(),
                });
            }
            if c.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: c.dim(),
                });
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(MixtureParams {
            weights,
            means,
            covs,
        })
    }

    pub fn single(mean: Vec<f64>, cov: SpdMatrix) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![cov])
    }

    /// `N(0, I_p)`.
    pub fn standard(dim: usize) -> Self {
        Self::single(vec![0.0; dim], SpdMatrix::identity(dim)).expect("valid standard normal")
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covs(&self) -> &[SpdMatrix] {
        &self.covs
    }

    /// Mixture mean `Σ_d α_d μ_d`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (acc, x) in m.iter_mut().zip(mu) {
                *acc += w * x;
            }
        }
        m
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: point.len(),
            })
        }
    }

    /// Writes `log α_d + log q_d(point)` into `out`; zero-weight components get `-inf`.
    pub(crate) fn joint_log_densities(&self, point: &[f64], out: &mut [f64]) {
        for (d, slot) in out.iter_mut().enumerate() {
            let w = self.weights[d];
            *slot = if w > 0.0 {
                w.ln() + mvn_log_pdf_unchecked(point, &self.means[d], &self.covs[d])
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    pub fn mixture_log_density(&self, point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        if self.n_components() == 1 {
            return Ok(mvn_log_pdf_unchecked(point, &self.means[0], &self.covs[0]));
        }
        let mut buf = vec![0.0; self.n_components()];
        self.joint_log_densities(point, &mut buf);
        log_sum_exp(&buf)
    }

    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (d, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                cum += w;
                last_positive = d;
                if u < cum {
                    return d;
                }
            }
        }
        last_positive
    }

    /// One draw and the index of the component it came from.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let d = self.pick_component(rng);
        (mvn_sample(&self.means[d], &self.covs[d], rng), d)
    }

    pub fn mixture_sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> (Vec<Vec<f64>>, Vec<usize>) {
        (0..n).map(|_| self.sample_one(rng)).unzip()
    }

    pub fn responsibilities(&self, points: &[Vec<f64>]) -> Result<Responsibilities> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = self.n_components();
        let mut values = vec![0.0; points.len() * d];
        for (i, point) in points.iter().enumerate() {
            self.check_point(point)?;
            let row = &mut values[i * d..(i + 1) * d];
            self.joint_log_densities(point, row);
            normalize_row(row);
        }
        Ok(Responsibilities::from_raw(points.len(), d, values))
    }

    pub fn add_component(
        &self,
        new_mean: Vec<f64>,
        new_cov: SpdMatrix,
        alpha_add: f64,
    ) -> Result<Self> {
        if !(alpha_add > 0.0 && alpha_add < 1.0) {
            return Err(Error::invalid(format!(
                "alpha_add must lie in (0,1), got {alpha_add}"
            )));
        }
        self.check_point(&new_mean)?;
        if new_cov.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: new_cov.dim(),
            });
        }
        let mut weights: Vec<f64> = self.weights.iter().map(|w| (1.0 - alpha_add) * w).collect();
        weights.push(alpha_add);
        let mut means = self.means.clone();
        means.push(new_mean);
        let mut covs = self.covs.clone();
        covs.push(new_cov);
        Ok(MixtureParams {
            weights,
            means,
            covs,
        })
    }

    /// Drops component `index` and renormalizes by `1 − α_index`.
    pub fn remove_component(&self, index: usize) -> Result<Self> {
        let d = self.n_components();
        if d == 1 {
            return Err(Error::CannotRemoveLast);
        }
        if index >= d {
            return Err(Error::invalid(format!(
                "component index {index} out of range for D = {d}"
            )));
        }
        let removed = self.weights[index];
        let mut weights = self.weights.clone();
        weights.remove(index);
        if removed > 0.0 {
            let scale = 1.0 - removed;
            weights.iter_mut().for_each(|w| *w /= scale);
        }
        let mut means = self.means.clone();
        means.remove(index);
        let mut covs = self.covs.clone();
        covs.remove(index);
        Ok(MixtureParams {
            weights,
            means,
            covs,
        })
    }

    pub(crate) fn from_parts_unchecked(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<SpdMatrix>,
    ) -> Self {
        MixtureParams {
            weights,
            means,
            covs,
        }
    }

    pub fn snapshot(&self) -> MixtureSnapshot {
        MixtureSnapshot {
            d: self.n_components(),
            weights: self.weights.clone(),
            means: self.means.clone(),
            covs: self.covs.iter().map(SpdMatrix::to_rows).collect(),
        }
    }

    pub fn from_snapshot(s: &MixtureSnapshot) -> Result<Self> {
        if s.d != s.weights.len() {
            return Err(Error::Format(format!(
                "D = {} but {} weights given",
                s.d,
                s.weights.len()
            )));
        }
        let covs = s
            .covs
            .iter()
            .map(|rows| SpdMatrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        Self::new(s.weights.clone(), s.means.clone(), covs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("mixture snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_snapshot(&serde_json::from_str(text)?)
    }
}

/// Turns a row of joint log-densities into probabilities in place.
pub(crate) fn normalize_row(row: &mut [f64]) -> f64 {
    let lse = log_sum_exp(row).expect("non-empty row");
    if lse == f64::NEG_INFINITY || !lse.is_finite() {
        warn!("all component densities underflowed; using uniform responsibilities");
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|r| *r = u);
        return lse;
    }
    let mut total = 0.0;
    for r in row.iter_mut() {
        *r = (*r - lse).exp();
        total += *r;
    }
    row.iter_mut().for_each(|r| *r /= total);
    lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mvn_log_pdf;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cov(rows: &[[f64; 2]; 2]) -> SpdMatrix {
        SpdMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap()
    }

    fn three_component() -> MixtureParams {
        MixtureParams::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![0.0, 1.0], vec![-1.5, 0.5], vec![2.0, -1.0]],
            vec![
                cov(&[[1.0, 0.2], [0.2, 0.7]]),
                cov(&[[0.5, -0.1], [-0.1, 1.2]]),
                cov(&[[2.0, 0.0], [0.0, 0.3]]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_component_density_is_mvn() {
        let c = cov(&[[1.3, 0.4], [0.4, 0.9]]);
        let m = MixtureParams::single(vec![0.5, -0.2], c.clone()).unwrap();
        for x in [[0.0, 0.0], [3.0, -2.0], [0.5, -0.2]] {
            assert_eq!(
                m.mixture_log_density(&x).unwrap(),
                mvn_log_pdf(&x, &[0.5, -0.2], &c).unwrap()
            );
        }
    }

    #[test]
    fn symmetric_pair_at_midpoint() {
        let m = MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
            vec![SpdMatrix::identity(2), SpdMatrix::identity(2)],
        )
        .unwrap();
        let x = [0.0, 0.0];
        let common = mvn_log_pdf(&x, &[2.0, 0.0], &SpdMatrix::identity(2)).unwrap();
        assert_abs_diff_eq!(m.mixture_log_density(&x).unwrap(), common, epsilon = 1e-14);
        let r = m.responsibilities(&[x.to_vec()]).unwrap();
        assert_abs_diff_eq!(r.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.get(0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn density_matches_naive_sum() {
        let m = three_component();
        for x in [[0.3, 0.1], [-1.0, 2.0], [2.5, -0.5]] {
            let naive: f64 = (0..3)
                .map(|d| {
                    m.weights()[d] * mvn_log_pdf(&x, &m.means()[d], &m.covs()[d]).unwrap().exp()
                })
                .sum();
            assert_abs_diff_eq!(m.mixture_log_density(&x).unwrap(), naive.ln(), epsilon = 1e-12);

            let r = m.responsibilities(&[x.to_vec()]).unwrap();
            for d in 0..3 {
                let direct = m.weights()[d]
                    * mvn_log_pdf(&x, &m.means()[d], &m.covs()[d]).unwrap().exp()
                    / naive;
                assert_abs_diff_eq!(r.get(0, d), direct, epsilon = 1e-12);
            }
        }
        assert!(m.mixture_log_density(&[1.0]).is_err());
    }

    #[test]
    fn degenerate_weight_sampling() {
        let m = MixtureParams::new(
            vec![1.0, 0.0],
            vec![vec![0.0], vec![5.0]],
            vec![SpdMatrix::identity(1), SpdMatrix::identity(1)],
        )
        .unwrap();
        let (_, ids) = m.mixture_sample(1000, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(ids.iter().all(|&d| d == 0));
    }

    #[test]
    fn component_frequencies() {
        let m = MixtureParams::new(
            vec![0.3, 0.7],
            vec![vec![0.0], vec![5.0]],
            vec![SpdMatrix::identity(1), SpdMatrix::identity(1)],
        )
        .unwrap();
        let n = 100_000;
        let (_, ids) = m.mixture_sample(n, &mut ChaCha8Rng::seed_from_u64(4));
        let f0 = ids.iter().filter(|&&d| d == 0).count() as f64 / n as f64;
        assert!((f0 - 0.3).abs() < 0.01, "{f0}");

        let again = m.mixture_sample(50, &mut ChaCha8Rng::seed_from_u64(4));
        let first = m.mixture_sample(50, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(again, first);
    }

    #[test]
    fn sample_mean_within_standard_errors() {
        let m = three_component();
        let n = 200_000;
        let (pts, _) = m.mixture_sample(n, &mut ChaCha8Rng::seed_from_u64(11));
        let target = m.mean();
        for k in 0..2 {
            let mean = pts.iter().map(|p| p[k]).sum::<f64>() / n as f64;
            let var = pts.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - target[k]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn add_and_remove_arithmetic() {
        let m = MixtureParams::standard(1);
        let m2 = m.add_component(vec![3.0], SpdMatrix::identity(1), 0.2).unwrap();
        assert_eq!(m2.weights(), &[0.8, 0.2]);
        assert!(m.add_component(vec![3.0], SpdMatrix::identity(1), 1.0).is_err());
        assert!(m.add_component(vec![3.0], SpdMatrix::identity(1), 0.0).is_err());

        let m3 = MixtureParams::new(
            vec![0.5, 0.3, 0.2],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![SpdMatrix::identity(1); 3],
        )
        .unwrap();
        let r = m3.remove_component(2).unwrap();
        assert_abs_diff_eq!(r.weights()[0], 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights()[1], 0.375, epsilon = 1e-15);
        assert!(matches!(
            MixtureParams::standard(2).remove_component(0),
            Err(Error::CannotRemoveLast)
        ));
    }

    #[test]
    fn remove_zero_weight_component() {
        let m = MixtureParams::new(
            vec![0.6, 0.0, 0.4],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![SpdMatrix::identity(1); 3],
        )
        .unwrap();
        let r = m.remove_component(1).unwrap();
        assert_eq!(r.weights(), &[0.6, 0.4]);
    }

    #[test]
    fn add_raises_density_at_new_mean() {
        let m = MixtureParams::single(vec![0.0, 0.0], SpdMatrix::identity(2)).unwrap();
        let new_mean = vec![4.0, 4.0];
        let c = SpdMatrix::scaled_identity(2, 0.5);
        let alpha_add = 0.1;
        let old = m.mixture_log_density(&new_mean).unwrap().exp();
        let q_new = mvn_log_pdf(&new_mean, &new_mean, &c).unwrap().exp();
        assert!(old < alpha_add * q_new);
        let m2 = m.add_component(new_mean.clone(), c, alpha_add).unwrap();
        assert!(m2.mixture_log_density(&new_mean).unwrap().exp() > old);
    }

    #[test]
    fn remove_then_readd_is_identity() {
        let m = three_component();
        let r = 1;
        let removed = m.remove_component(r).unwrap();
        let back = removed
            .add_component(m.means()[r].clone(), m.covs()[r].clone(), m.weights()[r])
            .unwrap();
        for a in -3..=3 {
            for b in -3..=3 {
                let x = [a as f64 * 0.7, b as f64 * 0.6];
                assert_abs_diff_eq!(
                    back.mixture_log_density(&x).unwrap(),
                    m.mixture_log_density(&x).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn snapshot_json_field_order() {
        let m = MixtureParams::standard(2);
        let json = m.to_json();
        assert!(json.starts_with("{\"D\":1,\"weights\":[1.0],\"means\":[[0.0,0.0]],\"covs\":"));
        assert_eq!(MixtureParams::from_json(&json).unwrap(), m);
    }

    #[test]
    fn responsibility_underflow_is_uniform() {
        let m = MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![1.0]],
            vec![SpdMatrix::scaled_identity(1, 1e-6); 2],
        )
        .unwrap();
        let r = m.responsibilities(&[vec![1e200]]).unwrap();
        assert_eq!(r.row(0), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(
            ws in prop::collection::vec(0.01f64..1.0, 1..5),
            pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 1..20),
        ) {
            let total: f64 = ws.iter().sum();
            let d = ws.len();
            let m = MixtureParams::new(
                ws.iter().map(|w| w / total).collect(),
                (0..d).map(|k| vec![k as f64 - 1.0, 0.5 * k as f64]).collect(),
                (0..d).map(|k| SpdMatrix::scaled_identity(2, 0.5 + k as f64)).collect(),
            ).unwrap();
            let r = m.responsibilities(&pts).unwrap();
            for i in 0..pts.len() {
                let s: f64 = r.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
                prop_assert!(r.row(i).iter().all(|v| *v >= 0.0));
            }
        }

        #[test]
        fn add_then_remove_last_is_identity(
            w in 0.05f64..0.95, x in -5.0f64..5.0, y in -5.0f64..5.0,
        ) {
            let m = three_component();
            let back = m.add_component(vec![1.0, 1.0], SpdMatrix::identity(2), w).unwrap()
                .remove_component(3).unwrap();
            let a = back.mixture_log_density(&[x, y]).unwrap();
            let b = m.mixture_log_density(&[x, y]).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
