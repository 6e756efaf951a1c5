//! Tanh-squashed diagonal Gaussian policy head.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Matrix;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Reparameterised samples for a batch; one row per sample.
#[derive(Clone, Debug)]
pub struct SquashedBatch {
    pub action: Matrix,
    pub log_prob: Vec<f64>,
    eps: Matrix,
    std: Matrix,
    /// log_std was clamped (its gradient is zero there).
    clamped: Vec<bool>,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
#[inline]
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

impl SquashedBatch {
    /// `a = tanh(mean + exp(log_std) * eps)` with the change-of-variables
    /// corrected log-density.
    pub fn forward(mean: &Matrix, log_std: &Matrix, eps: &Matrix) -> Self {
        assert_eq!(mean.shape(), log_std.shape());
        assert_eq!(mean.shape(), eps.shape());
        let (n, d) = mean.shape();
        let mut action = Matrix::zeros(n, d);
        let mut std = Matrix::zeros(n, d);
        let mut clamped = vec![false; n * d];
        let mut log_prob = vec![0.0; n];
        for r in 0..n {
            let mut lp = 0.0;
            for c in 0..d {
                let raw = log_std.get(r, c);
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[r * d + c] = ls != raw;
                let s = ls.exp();
                let e = eps.get(r, c);
                let u = mean.get(r, c) + s * e;
                action.set(r, c, u.tanh());
                std.set(r, c, s);
                lp += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
            }
            log_prob[r] = lp;
        }
        SquashedBatch {
            action,
            log_prob,
            eps: eps.clone(),
            std,
            clamped,
        }
    }

    pub fn sample(mean: &Matrix, log_std: &Matrix, rng: &mut impl Rng) -> Self {
        let eps = standard_normal_matrix(mean.rows(), mean.cols(), rng);
        SquashedBatch::forward(mean, log_std, &eps)
    }

    /// Gradients w.r.t. `(mean, log_std)` given upstream gradients on the
    /// action and on each row's log-probability.
    pub fn backward(&self, d_action: &Matrix, d_log_prob: &[f64]) -> (Matrix, Matrix) {
        let (n, d) = self.action.shape();
        let mut d_mean = Matrix::zeros(n, d);
        let mut d_log_std = Matrix::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let a = self.action.get(r, c);
                let s = self.std.get(r, c);
                let e = self.eps.get(r, c);
                let da = d_action.get(r, c);
                let dl = d_log_prob[r];
                let jac = 1.0 - a * a;
                d_mean.set(r, c, da * jac + dl * 2.0 * a);
                if !self.clamped[r * d + c] {
                    d_log_std.set(r, c, da * jac * s * e + dl * (2.0 * a * s * e - 1.0));
                }
            }
        }
        (d_mean, d_log_std)
    }
}

pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Single-vector sample: returns the squashed action and its log-probability.
pub fn squashed_gaussian_sample(
    mean: &[f64],
    log_std: &[f64],
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let s = SquashedBatch::sample(&Matrix::row_vector(mean), &Matrix::row_vector(log_std), rng);
    (s.action.into_vec(), s.log_prob[0])
}
