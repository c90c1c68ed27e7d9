//! Small dense feedforward networks with hand-written reverse mode.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out x in`) followed by the bias vector. Gradients use the
//! same layout and are accumulated until an optimizer step consumes them.

mod adam;
pub mod io;
mod monotone;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use monotone::{MonotoneNet, MonotoneScratch};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CcnError, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<S: Real>(self, v: S) -> S {
        match self {
            Activation::Relu => v.max(S::zero()),
            // Through exp: about twice as fast as libm tanh, same accuracy
            // in absolute terms.
            Activation::Tanh => S::one() - S::c(2.0) / ((v + v).exp() + S::one()),
            Activation::Sigmoid => v.sigmoid(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output<S: Real>(self, out: S) -> S {
        match self {
            Activation::Relu => {
                if out > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - out * out,
            Activation::Sigmoid => out * (S::one() - out),
            Activation::Identity => S::one(),
        }
    }

    /// Global Lipschitz constant of the activation.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Number of parameters of a dense net with the given layer widths.
/// Dot product with four running sums, which lets the compiler vectorize.
#[inline]
pub(crate) fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [S::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = S::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Activations recorded by a forward pass. `acts[0]` is the input and
/// `acts[l + 1]` the post-activation output of layer `l`.
#[derive(Clone, Debug, Default)]
pub struct Tape<S> {
    acts: Vec<Vec<S>>,
}

impl<S: Real> Tape<S> {
    pub fn for_widths(widths: &[usize]) -> Self {
        Tape { acts: widths.iter().map(|&w| vec![S::zero(); w]).collect() }
    }

    pub fn output(&self) -> &[S] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Debug)]
pub struct DenseNet<S> {
    widths: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<S>,
    grads: Vec<S>,
    offsets: Vec<usize>,
    recorded: Option<Tape<S>>,
}

impl<S: Real> DenseNet<S> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden, output)?;
        for l in 0..net.depth() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = S::c(rng.random_range(-limit..=limit));
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        let n = param_count(widths);
        Self::from_params(widths, hidden, output, vec![S::zero(); n])
    }

    pub fn from_params(widths: &[usize], hidden: Activation, output: Activation, params: Vec<S>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(CcnError::InvalidConfig(format!(
                "layer widths must hold at least two positive entries, got {widths:?}"
            )));
        }
        let expected = param_count(widths);
        if params.len() != expected {
            return Err(CcnError::DimensionMismatch { context: "parameter vector", expected, actual: params.len() });
        }
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut acc = 0;
        for w in widths.windows(2) {
            offsets.push(acc);
            acc += w[0] * w[1] + w[1];
        }
        Ok(DenseNet {
            widths: widths.to_vec(),
            hidden,
            output,
            grads: vec![S::zero(); params.len()],
            params,
            offsets,
            recorded: None,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn grads(&self) -> &[S] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [S] {
        &mut self.grads
    }

    pub(crate) fn params_and_grads_mut(&mut self) -> (&mut [S], &mut [S]) {
        (&mut self.params, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = S::zero());
    }

    pub fn new_tape(&self) -> Tape<S> {
        Tape::for_widths(&self.widths)
    }

    #[inline]
    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.depth() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, input: &[S]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(CcnError::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, input: &[S], out: &mut [S]) {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let w = &self.params[self.offsets[l]..self.offsets[l] + n_in * n_out];
        let b = &self.params[self.offsets[l] + n_in * n_out..self.offsets[l] + n_in * n_out + n_out];
        let act = self.activation_of(l);
        for j in 0..n_out {
            out[j] = act.apply(b[j] + dot(&w[j * n_in..(j + 1) * n_in], input));
        }
    }

    /// Pure forward pass.
    pub fn forward(&self, input: &[S]) -> Result<Vec<S>> {
        let mut tape = self.new_tape();
        self.forward_tape(input, &mut tape)?;
        Ok(tape.output().to_vec())
    }

    /// Forward pass recording activations into a caller-owned tape.
    pub fn forward_tape(&self, input: &[S], tape: &mut Tape<S>) -> Result<()> {
        self.check_input(input)?;
        if tape.acts.len() != self.widths.len() {
            *tape = self.new_tape();
        }
        tape.acts[0].copy_from_slice(input);
        for l in 0..self.depth() {
            let (before, after) = tape.acts.split_at_mut(l + 1);
            self.layer_forward(l, &before[l], &mut after[0]);
        }
        Ok(())
    }

    /// Forward pass that keeps its activations for a later [`DenseNet::backward`].
    pub fn forward_record(&mut self, input: &[S]) -> Result<Vec<S>> {
        let mut tape = self.recorded.take().unwrap_or_else(|| self.new_tape());
        self.forward_tape(input, &mut tape)?;
        let out = tape.output().to_vec();
        self.recorded = Some(tape);
        Ok(out)
    }

    /// Backward pass against the last [`DenseNet::forward_record`]. Accumulates
    /// parameter gradients and returns the gradient with respect to the input.
    pub fn backward(&mut self, upstream: &[S]) -> Result<Vec<S>> {
        let tape = self.recorded.take().ok_or(CcnError::NoForwardPass)?;
        let mut input_grad = vec![S::zero(); self.input_dim()];
        let res = self.backward_tape(&tape, upstream, Some(&mut input_grad));
        self.recorded = Some(tape);
        res.map(|_| input_grad)
    }

    /// Accumulates `d(output . upstream)/d params` into the gradient buffer
    /// and, when requested, adds the input gradient into `input_grad`.
    pub fn backward_tape(&mut self, tape: &Tape<S>, upstream: &[S], input_grad: Option<&mut [S]>) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(CcnError::DimensionMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if tape.acts.len() != self.widths.len() {
            return Err(CcnError::NoForwardPass);
        }
        let mut grad_post = upstream.to_vec();
        let mut grad_in = Vec::new();
        for l in (1..self.depth()).rev() {
            grad_in.clear();
            grad_in.resize(self.widths[l], S::zero());
            self.layer_backward(l, &tape.acts[l], &tape.acts[l + 1], &mut grad_post, Some(&mut grad_in));
            std::mem::swap(&mut grad_post, &mut grad_in);
        }
        self.layer_backward(0, &tape.acts[0], &tape.acts[1], &mut grad_post, input_grad);
        Ok(())
    }

    /// Converts `grad_post` (wrt layer output) to the pre-activation delta in
    /// place, accumulates parameter grads, optionally writes the input grad.
    fn layer_backward(
        &mut self,
        l: usize,
        input: &[S],
        output: &[S],
        grad_post: &mut [S],
        grad_input: Option<&mut [S]>,
    ) {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let act = self.activation_of(l);
        for (g, o) in grad_post.iter_mut().zip(output) {
            *g *= act.grad_from_output(*o);
        }
        let off = self.offsets[l];
        {
            let gw = &mut self.grads[off..off + n_in * n_out + n_out];
            let (gw, gb) = gw.split_at_mut(n_in * n_out);
            for j in 0..n_out {
                let d = grad_post[j];
                if d == S::zero() {
                    continue;
                }
                gb[j] += d;
                for (g, x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                    *g += d * *x;
                }
            }
        }
        if let Some(gi) = grad_input {
            let w = &self.params[off..off + n_in * n_out];
            for j in 0..n_out {
                let d = grad_post[j];
                if d == S::zero() {
                    continue;
                }
                for (g, wi) in gi.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *g += d * *wi;
                }
            }
        }
    }

    /// Clamps every parameter into `[-bound, bound]`.
    pub fn clip_weights(&mut self, bound: S) {
        assert!(bound > S::zero(), "clip bound must be positive");
        for p in &mut self.params {
            *p = p.max(-bound).min(bound);
        }
    }

    /// Upper bound on the Lipschitz constant (Euclidean norms) from the
    /// product of per-layer Frobenius norms and activation constants.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        let mut bound = 1.0;
        for l in 0..self.depth() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.offsets[l];
            let fro: f64 =
                self.params[off..off + n_in * n_out].iter().map(|w| w.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
            bound *= fro * self.activation_of(l).lipschitz();
        }
        bound
    }
}

/// Scratch space for evaluating a net whose last input coordinate is a
/// probe value `z` while the remaining coordinates stay fixed. The first
/// layer's contribution from the fixed prefix is computed once and reused
/// for every probe.
#[derive(Clone, Debug, Default)]
pub struct ProbeScratch<S> {
    base: Vec<S>,
    delta0: Vec<S>,
    tape: Tape<S>,
    grad_post: Vec<S>,
    grad_in: Vec<S>,
}

impl<S: Real> DenseNet<S> {
    pub fn new_probe_scratch(&self) -> ProbeScratch<S> {
        ProbeScratch {
            base: vec![S::zero(); self.widths[1]],
            delta0: vec![S::zero(); self.widths[1]],
            tape: self.new_tape(),
            grad_post: Vec::new(),
            grad_in: Vec::new(),
        }
    }

    /// Fixes the prefix (all inputs but the last) and clears the delta accumulator.
    pub fn probe_prepare(&self, prefix: &[S], scratch: &mut ProbeScratch<S>) -> Result<()> {
        let n_in = self.widths[0];
        if prefix.len() + 1 != n_in {
            return Err(CcnError::DimensionMismatch {
                context: "probe prefix (input dim - 1)",
                expected: n_in - 1,
                actual: prefix.len(),
            });
        }
        if self.output_dim() != 1 {
            return Err(CcnError::DimensionMismatch {
                context: "probe network output",
                expected: 1,
                actual: self.output_dim(),
            });
        }
        if scratch.base.len() != self.widths[1] || scratch.tape.acts.len() != self.widths.len() {
            *scratch = self.new_probe_scratch();
        }
        let n_out = self.widths[1];
        let w = &self.params[0..n_in * n_out];
        let b = &self.params[n_in * n_out..n_in * n_out + n_out];
        for j in 0..n_out {
            scratch.base[j] = b[j] + dot(&w[j * n_in..j * n_in + n_in - 1], prefix);
        }
        scratch.delta0.iter_mut().for_each(|d| *d = S::zero());
        Ok(())
    }

    /// Output at probe value `z` for the prepared prefix.
    pub fn probe_forward(&self, scratch: &mut ProbeScratch<S>, z: S) -> S {
        let n_in = self.widths[0];
        let n_out = self.widths[1];
        let act = self.activation_of(0);
        {
            let h = &mut scratch.tape.acts[1];
            for j in 0..n_out {
                let wz = self.params[j * n_in + n_in - 1];
                h[j] = act.apply(scratch.base[j] + wz * z);
            }
        }
        for l in 1..self.depth() {
            let (before, after) = scratch.tape.acts.split_at_mut(l + 1);
            self.layer_forward(l, &before[l], &mut after[0]);
        }
        scratch.tape.output()[0]
    }

    /// Backward for the most recent [`DenseNet::probe_forward`]. Upper layers
    /// accumulate their grads directly; the first-layer delta is summed into
    /// the scratch until [`DenseNet::probe_finish`].
    pub fn probe_backward(&mut self, scratch: &mut ProbeScratch<S>, z: S, upstream: S) {
        let mut grad_post = std::mem::take(&mut scratch.grad_post);
        let mut grad_in = std::mem::take(&mut scratch.grad_in);
        grad_post.clear();
        grad_post.push(upstream);
        for l in (1..self.depth()).rev() {
            grad_in.clear();
            grad_in.resize(self.widths[l], S::zero());
            self.layer_backward(
                l,
                &scratch.tape.acts[l],
                &scratch.tape.acts[l + 1],
                &mut grad_post,
                Some(&mut grad_in),
            );
            std::mem::swap(&mut grad_post, &mut grad_in);
        }
        let n_in = self.widths[0];
        let act = self.activation_of(0);
        for (j, (gp, h)) in grad_post.iter().zip(&scratch.tape.acts[1]).enumerate() {
            let d = *gp * act.grad_from_output(*h);
            scratch.delta0[j] += d;
            self.grads[j * n_in + n_in - 1] += d * z;
        }
        scratch.grad_post = grad_post;
        scratch.grad_in = grad_in;
    }

    /// Flushes the accumulated first-layer delta into the prefix weights and
    /// biases; adds the gradient with respect to the prefix into `prefix_grad`.
    pub fn probe_finish(&mut self, prefix: &[S], scratch: &ProbeScratch<S>, prefix_grad: Option<&mut [S]>) {
        let n_in = self.widths[0];
        let n_out = self.widths[1];
        {
            let (gw, gb) = self.grads[0..n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for j in 0..n_out {
                let d = scratch.delta0[j];
                if d == S::zero() {
                    continue;
                }
                gb[j] += d;
                for (g, x) in gw[j * n_in..j * n_in + n_in - 1].iter_mut().zip(prefix) {
                    *g += d * *x;
                }
            }
        }
        if let Some(pg) = prefix_grad {
            let w = &self.params[0..n_in * n_out];
            for j in 0..n_out {
                let d = scratch.delta0[j];
                if d == S::zero() {
                    continue;
                }
                for (g, wi) in pg.iter_mut().zip(&w[j * n_in..j * n_in + n_in - 1]) {
                    *g += d * *wi;
                }
            }
        }
    }
}
