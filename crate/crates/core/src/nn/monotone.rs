//! Mixture-of-sigmoids CDF network, monotone in the probe coordinate by
//! construction:
//!
//! `g(x, z) = sum_j softmax(w(x))_j * sigmoid(b(x)_j + exp(a(x)_j) * z)`

use rand::Rng;

use super::{Activation, DenseNet, Tape};
use crate::error::{CcnError, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct MonotoneNet<S> {
    components: usize,
    pub weight_net: DenseNet<S>,
    pub shift_net: DenseNet<S>,
    pub log_slope_net: DenseNet<S>,
}

/// Cached per-prefix quantities plus gradient accumulators.
#[derive(Clone, Debug, Default)]
pub struct MonotoneScratch<S> {
    tapes: [Tape<S>; 3],
    mix: Vec<S>,
    slope: Vec<S>,
    sig: Vec<S>,
    grad_w: Vec<S>,
    grad_b: Vec<S>,
    grad_a: Vec<S>,
    value: S,
}

// exp(a) is capped to keep slopes finite if training pushes a upward.
const MAX_LOG_SLOPE: f64 = 30.0;

impl<S: Real> MonotoneNet<S> {
    /// `hidden` lists the hidden widths shared by the three sub-networks.
    pub fn new<R: Rng + ?Sized>(
        covariate_dim: usize,
        hidden: &[usize],
        components: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if components == 0 {
            return Err(CcnError::InvalidConfig("monotone net needs J >= 1".into()));
        }
        let mut widths = vec![covariate_dim];
        widths.extend_from_slice(hidden);
        widths.push(components);
        Ok(MonotoneNet {
            components,
            weight_net: DenseNet::new(&widths, activation, Activation::Identity, rng)?,
            shift_net: DenseNet::new(&widths, activation, Activation::Identity, rng)?,
            log_slope_net: DenseNet::new(&widths, activation, Activation::Identity, rng)?,
        })
    }

    pub fn from_nets(weight_net: DenseNet<S>, shift_net: DenseNet<S>, log_slope_net: DenseNet<S>) -> Result<Self> {
        let j = weight_net.output_dim();
        let d = weight_net.input_dim();
        for n in [&shift_net, &log_slope_net] {
            if n.output_dim() != j || n.input_dim() != d {
                return Err(CcnError::DimensionMismatch {
                    context: "monotone sub-network",
                    expected: j,
                    actual: n.output_dim(),
                });
            }
        }
        Ok(MonotoneNet { components: j, weight_net, shift_net, log_slope_net })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn covariate_dim(&self) -> usize {
        self.weight_net.input_dim()
    }

    /// Full input: covariates followed by `z` as the last coordinate.
    pub fn forward(&self, input: &[S]) -> Result<S> {
        let d = self.covariate_dim();
        if input.len() != d + 1 {
            return Err(CcnError::DimensionMismatch {
                context: "monotone network input",
                expected: d + 1,
                actual: input.len(),
            });
        }
        let mut s = self.new_scratch();
        self.prepare(&input[..d], &mut s)?;
        Ok(self.probe_forward(&mut s, input[d]))
    }

    pub fn new_scratch(&self) -> MonotoneScratch<S> {
        let j = self.components;
        MonotoneScratch {
            tapes: [self.weight_net.new_tape(), self.shift_net.new_tape(), self.log_slope_net.new_tape()],
            mix: vec![S::zero(); j],
            slope: vec![S::zero(); j],
            sig: vec![S::zero(); j],
            grad_w: vec![S::zero(); j],
            grad_b: vec![S::zero(); j],
            grad_a: vec![S::zero(); j],
            value: S::zero(),
        }
    }

    pub fn prepare(&self, covariates: &[S], s: &mut MonotoneScratch<S>) -> Result<()> {
        if s.mix.len() != self.components {
            *s = self.new_scratch();
        }
        self.weight_net.forward_tape(covariates, &mut s.tapes[0])?;
        self.shift_net.forward_tape(covariates, &mut s.tapes[1])?;
        self.log_slope_net.forward_tape(covariates, &mut s.tapes[2])?;
        let logits = s.tapes[0].output();
        let mx = logits.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for (m, l) in s.mix.iter_mut().zip(logits) {
            *m = (*l - mx).exp();
            total += *m;
        }
        for m in &mut s.mix {
            *m /= total;
        }
        let cap = S::c(MAX_LOG_SLOPE);
        for (sl, a) in s.slope.iter_mut().zip(s.tapes[2].output()) {
            *sl = a.min(cap).exp();
        }
        for v in s.grad_w.iter_mut().chain(&mut s.grad_b).chain(&mut s.grad_a) {
            *v = S::zero();
        }
        Ok(())
    }

    pub fn probe_forward(&self, s: &mut MonotoneScratch<S>, z: S) -> S {
        let shifts = s.tapes[1].output();
        let mut g = S::zero();
        for j in 0..self.components {
            let sg = (shifts[j] + s.slope[j] * z).sigmoid();
            s.sig[j] = sg;
            g += s.mix[j] * sg;
        }
        s.value = g;
        g
    }

    /// Accumulates dg/d(sub-net outputs) scaled by `upstream` for the last probe.
    pub fn probe_backward(&self, s: &mut MonotoneScratch<S>, z: S, upstream: S) {
        let g = s.value;
        let a_out = s.tapes[2].output();
        let cap = S::c(MAX_LOG_SLOPE);
        for j in 0..self.components {
            let sg = s.sig[j];
            let pi = s.mix[j];
            s.grad_w[j] += upstream * pi * (sg - g);
            let dpre = upstream * pi * sg * (S::one() - sg);
            s.grad_b[j] += dpre;
            if a_out[j] < cap {
                s.grad_a[j] += dpre * s.slope[j] * z;
            }
        }
    }

    /// Pushes the accumulated output gradients through the three sub-networks.
    pub fn finish(&mut self, s: &MonotoneScratch<S>, mut covariate_grad: Option<&mut [S]>) -> Result<()> {
        self.weight_net.backward_tape(&s.tapes[0], &s.grad_w, covariate_grad.as_deref_mut())?;
        self.shift_net.backward_tape(&s.tapes[1], &s.grad_b, covariate_grad.as_deref_mut())?;
        self.log_slope_net.backward_tape(&s.tapes[2], &s.grad_a, covariate_grad)?;
        Ok(())
    }

    pub fn nets(&self) -> [&DenseNet<S>; 3] {
        [&self.weight_net, &self.shift_net, &self.log_slope_net]
    }

    pub fn nets_mut(&mut self) -> [&mut DenseNet<S>; 3] {
        [&mut self.weight_net, &mut self.shift_net, &mut self.log_slope_net]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn output_is_a_probability() {
        let mut rng = seeded(1);
        let net = MonotoneNet::<f64>::new(2, &[8], 4, Activation::Relu, &mut rng).unwrap();
        for z in [-50.0, -1.0, 0.0, 2.0, 50.0] {
            let v = net.forward(&[0.3, -0.4, z]).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let mut rng = seeded(1);
        let net = MonotoneNet::<f64>::new(2, &[4], 3, Activation::Relu, &mut rng).unwrap();
        assert!(net.forward(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(21);
        let mut net = MonotoneNet::<f64>::new(2, &[5], 3, Activation::Tanh, &mut rng).unwrap();
        let x = [0.4, -0.9];
        let zs = [-0.5, 0.3, 1.2];
        let mut s = net.new_scratch();
        net.prepare(&x, &mut s).unwrap();
        for &z in &zs {
            net.probe_forward(&mut s, z);
            net.probe_backward(&mut s, z, 1.0);
        }
        let mut xg = vec![0.0; 2];
        net.finish(&s, Some(&mut xg)).unwrap();

        let total =
            |n: &MonotoneNet<f64>, x: &[f64]| -> f64 { zs.iter().map(|&z| n.forward(&[x[0], x[1], z]).unwrap()).sum() };
        let h = 1e-6;
        for k in 0..3 {
            for i in 0..net.nets()[k].params().len() {
                let analytic = net.nets()[k].grads()[i];
                let mut plus = net.clone();
                plus.nets_mut()[k].params_mut()[i] += h;
                let mut minus = net.clone();
                minus.nets_mut()[k].params_mut()[i] -= h;
                let fd = (total(&plus, &x) - total(&minus, &x)) / (2.0 * h);
                assert!((fd - analytic).abs() < 1e-6, "net {k} param {i}: {fd} vs {analytic}");
            }
        }
        for i in 0..2 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (total(&net, &xp) - total(&net, &xm)) / (2.0 * h);
            assert!((fd - xg[i]).abs() < 1e-6);
        }
    }
}
