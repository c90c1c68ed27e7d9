use serde::{Deserialize, Serialize};

use super::DenseNet;
use crate::error::{CcnError, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    pub first_moment: Vec<S>,
    pub second_moment: Vec<S>,
    pub step_count: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: vec![S::zero(); n_params],
            second_moment: vec![S::zero(); n_params],
            step_count: 0,
        }
    }

    pub fn for_net(net: &DenseNet<S>, config: AdamConfig) -> Self {
        Self::new(net.params().len(), config)
    }

    /// Bias-corrected Adam update of `params` from `grads`; zeroes `grads`.
    pub fn step(&mut self, params: &mut [S], grads: &mut [S]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(CcnError::DimensionMismatch {
                context: "adam state",
                expected: self.first_moment.len(),
                actual: params.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(CcnError::Diverged { what: "gradient", step: self.step_count as usize });
        }
        self.step_count += 1;
        let c = &self.config;
        let (b1, b2) = (S::c(c.beta1), S::c(c.beta2));
        let t = self.step_count as i32;
        let bc1 = S::one() - S::c(c.beta1.powi(t));
        let bc2 = S::one() - S::c(c.beta2.powi(t));
        let lr = S::c(c.learning_rate);
        let eps = S::c(c.epsilon);
        for (((p, g), m), v) in
            params.iter_mut().zip(grads.iter_mut()).zip(&mut self.first_moment).zip(&mut self.second_moment)
        {
            *m = b1 * *m + (S::one() - b1) * *g;
            *v = b2 * *v + (S::one() - b2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            *g = S::zero();
        }
        Ok(())
    }
}

/// One Adam update of `net` using its accumulated gradients.
pub fn adam_step<S: Real>(net: &mut DenseNet<S>, state: &mut AdamState<S>) -> Result<()> {
    let (params, grads) = net.params_and_grads_mut();
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn single(p: f64) -> DenseNet<f64> {
        DenseNet::from_params(&[1, 1], Activation::Relu, Activation::Identity, vec![p, 0.0]).unwrap()
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut net = single(0.3);
        let mut st = AdamState::for_net(&net, AdamConfig::default());
        adam_step(&mut net, &mut st).unwrap();
        assert_eq!(net.params(), &[0.3, 0.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = single(1.0);
        net.grads_mut()[0] = 1.0;
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        let mut st = AdamState::for_net(&net, cfg);
        adam_step(&mut net, &mut st).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction: delta = 0.1 / (1 + 1e-8).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((net.params()[0] - expected).abs() < 1e-12);
        assert!(net.grads().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut net = single(1.0);
        net.grads_mut()[1] = f64::NAN;
        let mut st = AdamState::for_net(&net, AdamConfig::default());
        assert!(matches!(adam_step(&mut net, &mut st), Err(CcnError::Diverged { .. })));
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let mut a = single(0.7);
        let mut b = single(0.7);
        let mut sa = AdamState::for_net(&a, AdamConfig::default());
        let mut sb = AdamState::for_net(&b, AdamConfig::default());
        for k in 0..5 {
            let g = 0.1 * k as f64 - 0.2;
            a.grads_mut()[0] = g;
            b.grads_mut()[0] = g;
            adam_step(&mut a, &mut sa).unwrap();
            adam_step(&mut b, &mut sb).unwrap();
        }
        assert_eq!(a.params(), b.params());
    }
}
