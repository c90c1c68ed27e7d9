//! The fully adjusted variant: representation heads, a Wasserstein critic
//! between the treated and control representations, and a propensity head
//! whose output can be appended to the features seen by `g0`/`g1`.
//!
//! The feature vector is `S(x) = [phi_w(x), phi_a(x), e(phi_a(x))]`. The
//! g-loss gradient flows into `phi_w` and `phi_a` but is stopped at the
//! propensity coordinate, so `e` is shaped only by the assignment loss.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ccn::{bce_with_grad, CdfModel, TrainConfig};
use crate::data::Dataset;
use crate::error::{CcnError, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Real;

/// Candidate values for `alpha` and `beta` in tuning sweeps.
pub const PENALTY_GRID: [f64; 6] = [5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5];

/// Where `phi_w` and `phi_a` come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationMode {
    /// Learned dense heads.
    #[default]
    Learned,
    /// Both heads are the identity on the (standardized) covariates and the
    /// features are `[x]` or `[x, e(x)]`.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FccnConfig {
    /// Weight of the Wasserstein term; 0 disables it.
    pub alpha: f64,
    /// Weight of the assignment loss; 0 stops it from shaping `phi_a`.
    pub beta: f64,
    /// Append `e(phi_a(x))` to the features.
    pub propensity_feature: bool,
    pub representation: RepresentationMode,
    pub critic_steps: usize,
    pub clip_bound: f64,
    pub q_w: usize,
    pub q_a: usize,
    pub head_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub critic_adam: AdamConfig,
}

impl Default for FccnConfig {
    fn default() -> Self {
        FccnConfig {
            alpha: 1e-5,
            beta: 5e-3,
            propensity_feature: true,
            representation: RepresentationMode::Learned,
            critic_steps: 5,
            clip_bound: 0.01,
            q_w: 25,
            q_a: 25,
            head_hidden: vec![100],
            critic_hidden: vec![100, 60],
            critic_adam: AdamConfig::default(),
        }
    }
}

impl FccnConfig {
    /// Every adjustment switched off: trains exactly like plain CCN.
    pub fn disabled() -> Self {
        FccnConfig {
            alpha: 0.0,
            beta: 0.0,
            propensity_feature: false,
            representation: RepresentationMode::Raw,
            ..FccnConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CcnError::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("alpha and beta must be >= 0, got {} and {}", self.alpha, self.beta));
        }
        if !(self.clip_bound > 0.0) {
            return bad(format!("clip_bound must be positive, got {}", self.clip_bound));
        }
        if self.critic_steps == 0 {
            return bad("critic_steps must be >= 1".into());
        }
        if self.representation == RepresentationMode::Learned && (self.q_w == 0 || self.q_a == 0) {
            return bad("q_w and q_a must be >= 1".into());
        }
        if self.head_hidden.iter().chain(&self.critic_hidden).any(|&w| w == 0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    /// Whether the propensity head receives any training signal.
    pub fn trains_propensity(&self) -> bool {
        self.propensity_feature || self.beta > 0.0
    }
}

/// The four auxiliary networks. `phi_w`/`phi_a` are `None` in raw mode.
#[derive(Clone, Debug)]
pub struct FccnHeads<S> {
    pub phi_w: Option<DenseNet<S>>,
    pub phi_a: Option<DenseNet<S>>,
    pub e_head: DenseNet<S>,
    pub critic: DenseNet<S>,
}

impl<S: Real> FccnHeads<S> {
    pub fn new<R: Rng + ?Sized>(
        covariate_dim: usize,
        config: &FccnConfig,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let head = |out: usize, rng: &mut R| {
            let mut w = vec![covariate_dim];
            w.extend_from_slice(&config.head_hidden);
            w.push(out);
            DenseNet::new(&w, activation, Activation::Identity, rng)
        };
        let (phi_w, phi_a) = match config.representation {
            RepresentationMode::Learned => (Some(head(config.q_w, rng)?), Some(head(config.q_a, rng)?)),
            RepresentationMode::Raw => (None, None),
        };
        let (w_dim, a_dim) = match config.representation {
            RepresentationMode::Learned => (config.q_w, config.q_a),
            RepresentationMode::Raw => (covariate_dim, covariate_dim),
        };
        let e_head = DenseNet::new(&[a_dim, 1], activation, Activation::Sigmoid, rng)?;
        let mut cw = vec![w_dim];
        cw.extend_from_slice(&config.critic_hidden);
        cw.push(1);
        let mut critic = DenseNet::new(&cw, Activation::Relu, Activation::Identity, rng)?;
        critic.clip_weights(S::c(config.clip_bound));
        Ok(FccnHeads { phi_w, phi_a, e_head, critic })
    }

    pub fn covariate_dim(&self) -> usize {
        match &self.phi_w {
            Some(n) => n.input_dim(),
            None => self.critic.input_dim(),
        }
    }

    pub fn q_w(&self) -> usize {
        self.critic.input_dim()
    }

    pub fn q_a(&self) -> usize {
        self.e_head.input_dim()
    }

    pub fn is_raw(&self) -> bool {
        self.phi_w.is_none()
    }

    pub fn phi_w(&self, x: &[S]) -> Result<Vec<S>> {
        match &self.phi_w {
            Some(n) => n.forward(x),
            None => self.check_raw(x),
        }
    }

    pub fn phi_a(&self, x: &[S]) -> Result<Vec<S>> {
        match &self.phi_a {
            Some(n) => n.forward(x),
            None => self.check_raw(x),
        }
    }

    pub fn propensity(&self, x: &[S]) -> Result<S> {
        let a = self.phi_a(x)?;
        Ok(self.e_head.forward(&a)?[0])
    }

    fn check_raw(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.covariate_dim() {
            return Err(CcnError::DimensionMismatch {
                context: "covariate vector",
                expected: self.covariate_dim(),
                actual: x.len(),
            });
        }
        Ok(x.to_vec())
    }

    pub fn nets(&self) -> Vec<&DenseNet<S>> {
        let mut v: Vec<&DenseNet<S>> = self.phi_w.iter().chain(self.phi_a.iter()).collect();
        v.push(&self.e_head);
        v.push(&self.critic);
        v
    }

    pub fn nets_mut(&mut self) -> Vec<&mut DenseNet<S>> {
        let mut v: Vec<&mut DenseNet<S>> = self.phi_w.iter_mut().chain(self.phi_a.iter_mut()).collect();
        v.push(&mut self.e_head);
        v.push(&mut self.critic);
        v
    }
}

/// `[phi_w(x), phi_a(x), e(phi_a(x))]`; in raw mode `[x, e(x)]`.
pub fn build_representation<S: Real>(heads: &FccnHeads<S>, x: &[S]) -> Result<Vec<S>> {
    let a = heads.phi_a(x)?;
    let e = heads.e_head.forward(&a)?[0];
    let mut out = if heads.is_raw() {
        a
    } else {
        let mut w = heads.phi_w(x)?;
        w.extend_from_slice(&a);
        w
    };
    out.push(e);
    Ok(out)
}

/// Trained heads together with the choice of whether `e` is a feature.
#[derive(Clone, Debug)]
pub struct Representation<S> {
    pub heads: FccnHeads<S>,
    pub propensity_feature: bool,
}

impl<S: Real> Representation<S> {
    /// Length of the feature vector fed to `g0`/`g1`.
    pub fn dim(&self) -> usize {
        let base = if self.heads.is_raw() { self.heads.covariate_dim() } else { self.heads.q_w() + self.heads.q_a() };
        base + usize::from(self.propensity_feature)
    }

    pub fn features(&self, x: &[S]) -> Result<Vec<S>> {
        if self.heads.is_raw() && !self.propensity_feature {
            return self.heads.check_raw(x);
        }
        let mut f = build_representation(&self.heads, x)?;
        if !self.propensity_feature {
            f.pop();
        }
        Ok(f)
    }
}

/// `mean_{t=1} D(phi_w(x)) - mean_{t=0} D(phi_w(x))`, or 0 with a warning
/// when either batch is empty.
pub fn wass_loss<S: Real>(heads: &FccnHeads<S>, batch0: &[Vec<S>], batch1: &[Vec<S>]) -> Result<S> {
    if batch0.is_empty() || batch1.is_empty() {
        log::warn!("wasserstein term skipped: a treatment arm is missing from the batch");
        return Ok(S::zero());
    }
    let mean = |b: &[Vec<S>]| -> Result<S> {
        let mut s = S::zero();
        for x in b {
            s += heads.critic.forward(&heads.phi_w(x)?)?[0];
        }
        Ok(s / S::c(b.len() as f64))
    };
    Ok(mean(batch1)? - mean(batch0)?)
}

/// Mean cross-entropy of `e(phi_a(x))` against the treatment labels.
pub fn assign_loss<S: Real>(heads: &FccnHeads<S>, xs: &[Vec<S>], treatment: &[u8]) -> Result<S> {
    if xs.is_empty() || xs.len() != treatment.len() {
        return Err(CcnError::InvalidData(format!(
            "assignment loss needs a non-empty aligned batch, got {} rows / {} labels",
            xs.len(),
            treatment.len()
        )));
    }
    let mut total = S::zero();
    for (x, &t) in xs.iter().zip(treatment) {
        total += bce_with_grad(t == 1, heads.propensity(x)?).0;
    }
    Ok(total / S::c(xs.len() as f64))
}

/// One critic ascent step on the gap between the two batches of critic
/// inputs, followed by clipping.
pub(crate) fn critic_step<S: Real>(
    critic: &mut DenseNet<S>,
    state: &mut AdamState<S>,
    inputs0: &[&[S]],
    inputs1: &[&[S]],
    clip_bound: S,
) -> Result<()> {
    let mut tape = critic.new_tape();
    for (inputs, sign) in [(inputs1, -S::one()), (inputs0, S::one())] {
        let u = sign / S::c(inputs.len() as f64);
        for x in inputs {
            critic.forward_tape(x, &mut tape)?;
            critic.backward_tape(&tape, &[u], None)?;
        }
    }
    adam_step(critic, state)?;
    critic.clip_weights(clip_bound);
    Ok(())
}

/// A standalone Wasserstein-1 estimate from a clipped critic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct W1Estimate {
    /// Critic gap `mean D(sample1) - mean D(sample0)`.
    pub gap: f64,
    /// Largest slope of the critic observed between sample points.
    pub slope: f64,
    /// `gap / slope`: the gap of the critic rescaled to be 1-Lipschitz on
    /// the observed points.
    pub w1: f64,
}

/// Trains a fresh clipped critic (identity representation) to separate the
/// two samples and reports the Lipschitz-normalized gap.
pub fn estimate_w1(
    sample0: &[Vec<f64>],
    sample1: &[Vec<f64>],
    config: &FccnConfig,
    steps: usize,
    seed: u64,
) -> Result<W1Estimate> {
    if sample0.is_empty() || sample1.is_empty() {
        return Err(CcnError::InvalidData("both samples must be non-empty".into()));
    }
    let dim = sample0[0].len();
    if sample0.iter().chain(sample1).any(|x| x.len() != dim) {
        return Err(CcnError::InvalidData("samples must share one dimension".into()));
    }
    let mut rng = stream_rng(seed, Stream::InitHeads);
    let mut widths = vec![dim];
    widths.extend_from_slice(&config.critic_hidden);
    widths.push(1);
    let mut critic = DenseNet::<f64>::new(&widths, Activation::Relu, Activation::Identity, &mut rng)?;
    critic.clip_weights(config.clip_bound);
    let mut state = AdamState::for_net(&critic, config.critic_adam);
    let a: Vec<&[f64]> = sample0.iter().map(Vec::as_slice).collect();
    let b: Vec<&[f64]> = sample1.iter().map(Vec::as_slice).collect();
    for _ in 0..steps {
        critic_step(&mut critic, &mut state, &a, &b, config.clip_bound)?;
    }
    let d0: Vec<f64> = a.iter().map(|x| critic.forward(x).map(|v| v[0])).collect::<Result<_>>()?;
    let d1: Vec<f64> = b.iter().map(|x| critic.forward(x).map(|v| v[0])).collect::<Result<_>>()?;
    let gap = d1.iter().sum::<f64>() / d1.len() as f64 - d0.iter().sum::<f64>() / d0.len() as f64;

    // Slope scan over random pairs of pooled points.
    let pooled: Vec<(&[f64], f64)> = a.iter().zip(&d0).chain(b.iter().zip(&d1)).map(|(x, d)| (*x, *d)).collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    let mut rng = stream_rng(seed, Stream::Sampling);
    let mut slope: f64 = 0.0;
    for _ in 0..8 {
        order.shuffle(&mut rng);
        for w in order.windows(2) {
            let (x, dx) = pooled[w[0]];
            let (y, dy) = pooled[w[1]];
            let dist = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            if dist > 1e-9 {
                slope = slope.max((dx - dy).abs() / dist);
            }
        }
    }
    let w1 = if slope > 0.0 { gap / slope } else { 0.0 };
    Ok(W1Estimate { gap, slope, w1 })
}

/// Trains `g0`/`g1` on the adjusted representation jointly with the heads.
///
/// With `alpha = beta = 0`, no propensity feature and raw representation,
/// the result is bit-identical to [`crate::ccn::train_ccn`] on the same seed.
pub fn train_fccn<S: Real>(data: &Dataset<S>, train: &TrainConfig, fccn: &FccnConfig) -> Result<CdfModel<S>> {
    crate::ccn::fit(data, train, Some(fccn))
}
