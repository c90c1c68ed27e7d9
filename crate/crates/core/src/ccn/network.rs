//! The conditional CDF network `g(features, z)` and the g-loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Activation, AdamConfig, AdamState, DenseNet, MonotoneNet, MonotoneScratch, ProbeScratch};
use crate::scalar::Real;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside
/// cross-entropy terms.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[default]
    Plain,
    Monotone,
}

/// `g(features, z)`: either a dense net on `[features, z]` with a sigmoid
/// output, or the mixture-of-sigmoids net that is monotone in `z`.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum CdfNetwork<S> {
    Plain(DenseNet<S>),
    Monotone(MonotoneNet<S>),
}

#[derive(Clone, Debug)]
pub enum ProbeCtx<S> {
    Plain(ProbeScratch<S>),
    Monotone(MonotoneScratch<S>),
}

impl<S: Real> CdfNetwork<S> {
    pub fn new<R: Rng + ?Sized>(
        architecture: Architecture,
        feature_dim: usize,
        hidden: &[usize],
        activation: Activation,
        components: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match architecture {
            Architecture::Plain => {
                let mut widths = vec![feature_dim + 1];
                widths.extend_from_slice(hidden);
                widths.push(1);
                CdfNetwork::Plain(DenseNet::new(&widths, activation, Activation::Sigmoid, rng)?)
            }
            Architecture::Monotone => {
                CdfNetwork::Monotone(MonotoneNet::new(feature_dim, hidden, components, activation, rng)?)
            }
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            CdfNetwork::Plain(_) => Architecture::Plain,
            CdfNetwork::Monotone(_) => Architecture::Monotone,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            CdfNetwork::Plain(n) => n.input_dim() - 1,
            CdfNetwork::Monotone(m) => m.covariate_dim(),
        }
    }

    pub fn new_ctx(&self) -> ProbeCtx<S> {
        match self {
            CdfNetwork::Plain(n) => ProbeCtx::Plain(n.new_probe_scratch()),
            CdfNetwork::Monotone(m) => ProbeCtx::Monotone(m.new_scratch()),
        }
    }

    pub fn prepare(&self, features: &[S], ctx: &mut ProbeCtx<S>) -> Result<()> {
        match (self, ctx) {
            (CdfNetwork::Plain(n), ProbeCtx::Plain(s)) => n.probe_prepare(features, s),
            (CdfNetwork::Monotone(m), ProbeCtx::Monotone(s)) => m.prepare(features, s),
            (net, ctx) => {
                *ctx = net.new_ctx();
                net.prepare(features, ctx)
            }
        }
    }

    #[inline]
    pub fn probe(&self, ctx: &mut ProbeCtx<S>, z: S) -> S {
        match (self, ctx) {
            (CdfNetwork::Plain(n), ProbeCtx::Plain(s)) => n.probe_forward(s, z),
            (CdfNetwork::Monotone(m), ProbeCtx::Monotone(s)) => m.probe_forward(s, z),
            _ => panic!("probe context does not match network"),
        }
    }

    #[inline]
    pub fn probe_backward(&mut self, ctx: &mut ProbeCtx<S>, z: S, upstream: S) {
        match (self, ctx) {
            (CdfNetwork::Plain(n), ProbeCtx::Plain(s)) => n.probe_backward(s, z, upstream),
            (CdfNetwork::Monotone(m), ProbeCtx::Monotone(s)) => m.probe_backward(s, z, upstream),
            _ => panic!("probe context does not match network"),
        }
    }

    pub fn finish(&mut self, features: &[S], ctx: &ProbeCtx<S>, feature_grad: Option<&mut [S]>) -> Result<()> {
        match (self, ctx) {
            (CdfNetwork::Plain(n), ProbeCtx::Plain(s)) => {
                n.probe_finish(features, s, feature_grad);
                Ok(())
            }
            (CdfNetwork::Monotone(m), ProbeCtx::Monotone(s)) => m.finish(s, feature_grad),
            _ => panic!("probe context does not match network"),
        }
    }

    /// `g(features, z)` for each `z` in `zs`.
    pub fn eval_many(&self, features: &[S], zs: &[S]) -> Result<Vec<S>> {
        let mut ctx = self.new_ctx();
        self.prepare(features, &mut ctx)?;
        Ok(zs.iter().map(|&z| self.probe(&mut ctx, z)).collect())
    }

    pub fn eval(&self, features: &[S], z: S) -> Result<S> {
        Ok(self.eval_many(features, &[z])?[0])
    }

    pub fn nets(&self) -> Vec<&DenseNet<S>> {
        match self {
            CdfNetwork::Plain(n) => vec![n],
            CdfNetwork::Monotone(m) => m.nets().to_vec(),
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut DenseNet<S>> {
        match self {
            CdfNetwork::Plain(n) => vec![n],
            CdfNetwork::Monotone(m) => m.nets_mut().into_iter().collect(),
        }
    }

    pub fn new_optimizer(&self, config: AdamConfig) -> Vec<AdamState<S>> {
        self.nets().iter().map(|n| AdamState::for_net(n, config)).collect()
    }

    pub fn adam_step(&mut self, states: &mut [AdamState<S>]) -> Result<()> {
        for (net, st) in self.nets_mut().into_iter().zip(states) {
            crate::nn::adam_step(net, st)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<Vec<S>> {
        self.nets().iter().map(|n| n.params().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<S>]) {
        for (net, p) in self.nets_mut().into_iter().zip(snapshot) {
            net.params_mut().copy_from_slice(p);
        }
    }
}

/// Cross-entropy of `prob` against a 0/1 target, with its derivative wrt
/// `prob`. The clamp acts as straight-through for the derivative.
#[inline]
pub fn bce_with_grad<S: Real>(target_one: bool, prob: S) -> (S, S) {
    let lo = S::c(PROB_FLOOR);
    let p = prob.max(lo).min(S::one() - lo);
    if target_one {
        (-p.ln(), -S::one() / p)
    } else {
        (-(S::one() - p).ln(), S::one() / (S::one() - p))
    }
}

/// g-loss terms of one datum: sum over probes `z` of
/// `BCE(1{y < z}, g(features, z))`. Gradients scaled by `scale` are
/// accumulated into `g`; the feature gradient is added into `feature_grad`.
pub fn g_loss_row<S: Real>(
    g: &mut CdfNetwork<S>,
    ctx: &mut ProbeCtx<S>,
    features: &[S],
    y: S,
    probes: &[S],
    scale: S,
    feature_grad: Option<&mut [S]>,
) -> Result<S> {
    g.prepare(features, ctx)?;
    let mut total = S::zero();
    for &z in probes {
        let p = g.probe(ctx, z);
        let (l, dl) = bce_with_grad(y < z, p);
        total += l;
        g.probe_backward(ctx, z, dl * scale);
    }
    g.finish(features, ctx, feature_grad)?;
    Ok(total)
}

/// A minibatch for [`g_loss_batch`]: row-major features (`n x d`), one
/// outcome per row, and `k` probe values per row (`n x k`).
#[derive(Clone, Copy, Debug)]
pub struct GLossBatch<'a, S> {
    pub features: &'a [S],
    pub outcomes: &'a [S],
    pub probes: &'a [S],
    pub probes_per_row: usize,
}

/// Mean over rows and probes of `BCE(1{y < z}, g(features, z))`; the
/// gradient of that mean is accumulated into `g` and, optionally, into
/// `feature_grad` (`n x d`).
pub fn g_loss_batch<S: Real>(
    g: &mut CdfNetwork<S>,
    batch: &GLossBatch<'_, S>,
    mut feature_grad: Option<&mut [S]>,
) -> Result<S> {
    let n = batch.outcomes.len();
    let k = batch.probes_per_row;
    let d = g.feature_dim();
    if n == 0 || k == 0 {
        return Err(crate::error::CcnError::InvalidData("g-loss needs at least one row and one probe".into()));
    }
    if batch.features.len() != n * d || batch.probes.len() != n * k {
        return Err(crate::error::CcnError::DimensionMismatch {
            context: "g-loss batch",
            expected: n * d,
            actual: batch.features.len(),
        });
    }
    if batch.outcomes.iter().any(|y| !y.is_finite()) {
        return Err(crate::error::CcnError::InvalidData("non-finite outcome in g-loss batch".into()));
    }
    let scale = S::one() / S::c((n * k) as f64);
    let mut ctx = g.new_ctx();
    let mut total = S::zero();
    for i in 0..n {
        let fg = feature_grad.as_deref_mut().map(|f| &mut f[i * d..(i + 1) * d]);
        total += g_loss_row(
            g,
            &mut ctx,
            &batch.features[i * d..(i + 1) * d],
            batch.outcomes[i],
            &batch.probes[i * k..(i + 1) * k],
            scale,
            fg,
        )?;
    }
    Ok(total * scale)
}
