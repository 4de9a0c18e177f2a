#![allow(dead_code)]

use mpmc_core::model::TractableTarget;
use mpmc_core::{MixtureParams, SpdMatrix};

/// Gauss–Hermite rule for `∫ f(x) e^{-x²} dx`: Newton iteration on the
/// orthonormal Hermite recurrence, started from the usual asymptotic guesses.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E[f(Z)]` for `Z ~ N(0,1)` by an `n`-node Gauss–Hermite rule.
pub fn normal_expectation(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(n);
    x.iter()
        .zip(&w)
        .map(|(x, w)| w * f(std::f64::consts::SQRT_2 * x))
        .sum::<f64>()
        / std::f64::consts::PI.sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two equal-weight unit-covariance modes at `(±half_gap, 0)`.
pub fn two_mode_truth(half_gap: f64) -> MixtureParams {
    MixtureParams::new(
        vec![0.5, 0.5],
        vec![vec![-half_gap, 0.0], vec![half_gap, 0.0]],
        vec![SpdMatrix::identity(2), SpdMatrix::identity(2)],
    )
    .unwrap()
}

pub fn two_mode_target(half_gap: f64, noise_cv: f64) -> TractableTarget {
    TractableTarget::new(two_mode_truth(half_gap), noise_cv, vec![(-20.0, 20.0); 2]).unwrap()
}
