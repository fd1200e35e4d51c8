use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

/// Per-parameter Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Matrix,
    pub v: Matrix,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Fresh state for a `rows × cols` parameter with the usual defaults
    /// (beta1 0.9, beta2 0.999, epsilon 1e-8).
    pub fn new(rows: usize, cols: usize, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn for_param(param: &Matrix, learning_rate: f64) -> Self {
        Self::new(param.rows(), param.cols(), learning_rate)
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(param: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(&state.m) || !param.same_shape(&state.v) {
        return Err(Error::invalid(format!(
            "adam shape mismatch: param {:?}, grad {:?}, moments {:?}/{:?}",
            param.shape(),
            grad.shape(),
            state.m.shape(),
            state.v.shape()
        )));
    }
    let (b1, b2) = (state.beta1, state.beta2);
    if !(0.0 < b1 && b1 < 1.0 && 0.0 < b2 && b2 < 1.0 && state.epsilon > 0.0) {
        return Err(Error::invalid("adam hyperparameters out of range"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 / (1.0 - b1.powi(t));
    let c2 = 1.0 / (1.0 - b2.powi(t));
    let lr = state.learning_rate;
    let eps = state.epsilon;
    let p = param.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((p, &g), m), v) in p.iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m * c1;
        let v_hat = *v * c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(x: f64) -> Matrix {
        Matrix::from_vec(1, 1, vec![x]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(1, 1, 0.1);
        adam_step(&mut p, &scalar(1.0), &mut s).unwrap();
        // m_hat = 1, v_hat = 1 => 1 - 0.1 / (1 + 1e-8)
        assert!((p.get(0, 0) - 0.9).abs() < 1e-8);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_on_fresh_state_is_identity() {
        let mut p = Matrix::from_vec(1, 3, vec![0.5, -2.0, 3.0]).unwrap();
        let before = p.clone();
        let mut s = AdamState::for_param(&p, 0.01);
        adam_step(&mut p, &Matrix::zeros(1, 3), &mut s).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Matrix::zeros(2, 2);
        let mut s = AdamState::new(2, 2, 0.1);
        assert!(adam_step(&mut p, &Matrix::zeros(1, 2), &mut s).is_err());
    }

    /// Straight transcription of the published recurrence, used as oracle.
    fn reference_adam(x0: f64, lr: f64, steps: usize, grad: impl Fn(f64) -> f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = grad(x);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn quadratic_converges_and_matches_reference() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(1, 1, 0.05);
        for _ in 0..100 {
            let g = scalar(2.0 * p.get(0, 0));
            adam_step(&mut p, &g, &mut s).unwrap();
        }
        let want = reference_adam(1.0, 0.05, 100, |x| 2.0 * x);
        assert!(p.get(0, 0).abs() < 0.1);
        assert!((p.get(0, 0) - want).abs() < 1e-12);
    }

    proptest! {
        // With no accumulated first moment a zero gradient cannot move the
        // parameters, whatever the step count or second moment.
        #[test]
        fn zero_gradient_with_zero_momentum_is_identity(
            vals in proptest::collection::vec(-10.0f64..10.0, 6),
            vs in proptest::collection::vec(0.0f64..5.0, 6),
            step in 0u64..1000,
            lr in 1e-4f64..1.0,
        ) {
            let mut p = Matrix::from_vec(2, 3, vals).unwrap();
            let before = p.clone();
            let mut s = AdamState::new(2, 3, lr);
            s.step = step;
            s.v = Matrix::from_vec(2, 3, vs).unwrap();
            adam_step(&mut p, &Matrix::zeros(2, 3), &mut s).unwrap();
            prop_assert_eq!(p, before);
            prop_assert_eq!(s.step, step + 1);
        }
    }
}
