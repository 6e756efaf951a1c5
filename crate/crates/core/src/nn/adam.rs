use super::{Matrix, Parameter};
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction and no weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub step: u64,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, params: &[&Parameter]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Adam {
            lr,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::config(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad.shape() != self.first[i].shape() {
                return Err(Error::config(format!("optimizer moment shape mismatch at parameter {i}")));
            }
            if !p.grad.is_finite() {
                return Err(Error::Divergence {
                    step: self.step + 1,
                    what: format!("non-finite gradient in parameter {i}"),
                });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            let g = p.grad.as_slice();
            let w = p.value.as_mut_slice();
            for k in 0..w.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                w[k] -= self.lr * mh / (vh.sqrt() + EPSILON);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Parameter::new(Matrix::row_vector(&[1.0, -2.0]));
        let mut opt = Adam::new(0.1, &[&p]);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_on_square_moves_by_lr() {
        // f(w) = w^2 at w = 1: g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / (2 + eps).
        let mut p = Parameter::new(Matrix::row_vector(&[1.0]));
        let mut opt = Adam::new(0.1, &[&p]);
        p.grad.set(0, 0, 2.0);
        opt.step(&mut [&mut p]).unwrap();
        let expect = 1.0 - 0.1 * 2.0 / (2.0 + EPSILON);
        assert!((p.value.get(0, 0) - expect).abs() < 1e-15);
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-8);
        assert_eq!(p.grad.get(0, 0), 0.0, "gradients are zeroed after the step");
    }

    #[test]
    fn identical_gradients_give_identical_updates() {
        let mut a = Parameter::new(Matrix::row_vector(&[0.5]));
        let mut b = Parameter::new(Matrix::row_vector(&[0.5]));
        let mut opt = Adam::new(0.01, &[&a, &b]);
        for _ in 0..5 {
            a.grad.set(0, 0, 0.3);
            b.grad.set(0, 0, 0.3);
            opt.step(&mut [&mut a, &mut b]).unwrap();
        }
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = Parameter::new(Matrix::row_vector(&[0.0]));
        let mut opt = Adam::new(0.1, &[&p]);
        p.grad.set(0, 0, f64::NAN);
        assert!(matches!(
            opt.step(&mut [&mut p]),
            Err(Error::Divergence { .. })
        ));
    }
}
