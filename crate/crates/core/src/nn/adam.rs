use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::{Error, Result};

/// Bias-corrected Adam over one flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Applies one Adam update in place and advances `state.step`.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::LengthMismatch { left: params.len(), right: grads.len() });
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::LengthMismatch { left: params.len(), right: state.m.len() });
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(state.beta1);
    let b2 = T::of(state.beta2);
    let one = T::one();
    let correction1 = T::of(1.0 - state.beta1.powi(t));
    let correction2 = T::of(1.0 - state.beta2.powi(t));
    let lr = T::of(state.lr);
    let eps = T::of(state.eps);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        let delta = lr * m_hat / (v_hat.sqrt() + eps);
        if delta != T::zero() {
            *p = *p - delta;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5f64, -1.25];
        let mut s = AdamState::new(2, 0.1);
        adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![0.5, -1.25]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1, 0.1);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = 0.1 / (1 + 1e-8)
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_follow_closed_form_recursion() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1, 0.01);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m_2 = 0.9·0.1 + 0.1 = 0.19, v_2 = 0.999·0.001 + 0.001 = 0.001999
        assert!((s.m[0] - 0.19).abs() < 1e-12);
        assert!((s.v[0] - 0.001999).abs() < 1e-12);
        // both bias-corrected moments equal 1 under a constant unit gradient
        let step = 0.01 / (1.0 + 1e-8);
        assert!((p[0] + 2.0 * step).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_is_bitwise_noop() {
        let mut p = vec![0.3f32, -0.0, 7.5e-3];
        let before = p.clone();
        let mut s = AdamState::new(3, 0.0);
        adam_step(&mut p, &[1.0, -2.0, 3.0], &mut s).unwrap();
        for (a, b) in p.iter().zip(&before) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn length_mismatch() {
        let mut p = vec![0.0f64; 2];
        let mut s = AdamState::new(2, 0.1);
        assert!(matches!(adam_step(&mut p, &[1.0], &mut s), Err(Error::LengthMismatch { .. })));
    }
}
