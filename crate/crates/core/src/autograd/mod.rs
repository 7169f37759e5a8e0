//! Small reverse-mode automatic differentiation engine over dense `f64`
//! tensors, plus Adam.
//!
//! A [`Graph`] records every operation as it is evaluated. Field
//! parameters and query coordinates are both ordinary leaves, so the same
//! `backward` pass yields parameter gradients for training and coordinate
//! gradients for the trajectory optimizer.

mod adam;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState, Param};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("rank {0} tensors are not supported")]
    UnsupportedRank(usize),
    #[error("{0}: reduction over an empty axis")]
    EmptyAxis(&'static str),
    #[error("{0}: index out of range")]
    IndexOutOfRange(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this graph; call zero_grad first")]
    BackwardTwice,
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("optimizer expected {grads} parameters, got {params}")]
    ParamCount { params: usize, grads: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_adam_step_moves_by_lr_against_the_gradient() {
        let mut p = vec![Param::new("w", Tensor::vector(vec![1.0, -2.0, 0.5]))];
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1));
        adam.step(&mut p, &[&[3.0, -0.01, 0.0]]).unwrap();
        // Bias correction makes the first step lr * sign(g).
        assert_abs_diff_eq!(p[0].value.data()[0], 0.9, epsilon = 1e-6);
        assert_abs_diff_eq!(p[0].value.data()[1], -1.9, epsilon = 1e-5);
        assert_eq!(p[0].value.data()[2], 0.5);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![Param::new("x", Tensor::vector(vec![3.0, -4.0]))];
        let mut adam = AdamState::new(AdamConfig::with_lr(0.05));
        for _ in 0..2000 {
            let mut g = Graph::new();
            let x = g.param(p[0].value.clone()).unwrap();
            let c = g.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
            let loss = g.mse(x, c).unwrap();
            g.backward(loss).unwrap();
            let grad = g.grad(x).unwrap().to_vec();
            adam.step(&mut p, &[&grad]).unwrap();
        }
        assert_abs_diff_eq!(p[0].value.data()[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(p[0].value.data()[1], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn adam_rejects_bad_gradients() {
        let mut p = vec![Param::new("w", Tensor::vector(vec![0.0, 0.0]))];
        let mut adam = AdamState::new(AdamConfig::default());
        assert!(matches!(
            adam.step(&mut p, &[&[f64::NAN, 0.0]]),
            Err(AutogradError::NonFiniteGradient(_))
        ));
        assert!(adam.step(&mut p, &[&[1.0]]).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn shape_errors_are_reported() {
        assert!(Tensor::matrix(2, 3, vec![0.0; 5]).is_err());
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        let b = g.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        assert!(matches!(g.matmul(a, b), Err(AutogradError::ShapeMismatch { .. })));
        assert!(matches!(g.backward(a), Err(AutogradError::NotScalar(_))));
    }
}
