//! CCN: one conditional CDF network per treatment arm, trained on the
//! g-loss at uniformly drawn probe values `z`.
//!
//! After training, `g_t(z, x)` estimates `Pr(Y(t) < z | X = x)`. Curves are
//! read off a grid, projected onto monotone sequences, and inverted for
//! quantiles and sampling.

mod curve;
mod network;
mod persist;
mod train;

pub use curve::{isotonic_non_decreasing, CdfCurve, QuantileEstimate};
pub use network::{
    bce_with_grad, g_loss_batch, g_loss_row, Architecture, CdfNetwork, GLossBatch, ProbeCtx, PROB_FLOOR,
};
pub use persist::{load_model, save_model, ModelManifest, RepresentationManifest, MANIFEST_FILE};
pub(crate) use train::fit;
pub use train::TrainReport;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, Standardizer};
use crate::error::{CcnError, Result};
use crate::fccn::Representation;
use crate::nn::{Activation, AdamConfig};
use crate::rng::seeded;
use crate::scalar::Real;

/// Grid resolution used for quantiles, sampling and means.
pub const DEFAULT_GRID: usize = 512;

/// Floor applied to neighbourhood probabilities so their logs stay finite.
pub const NEIGHBORHOOD_FLOOR: f64 = 1e-12;

/// Uniform probe distribution over the observed outcome range, widened on
/// both sides by `padding_fraction` of its width.
///
/// `center` and `scale` fix the affine map to the scale the networks see.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZSampler {
    pub low: f64,
    pub high: f64,
    pub padding_fraction: f64,
    pub center: f64,
    pub scale: f64,
}

impl ZSampler {
    pub fn new(low: f64, high: f64, padding_fraction: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(CcnError::InvalidConfig(format!("z range needs finite low < high, got ({low}, {high})")));
        }
        if !(padding_fraction >= 0.0 && padding_fraction.is_finite()) {
            return Err(CcnError::InvalidConfig(format!("padding fraction must be >= 0, got {padding_fraction}")));
        }
        Ok(ZSampler { low, high, padding_fraction, center: 0.5 * (low + high), scale: 0.5 * (high - low) })
    }

    /// Range of the given outcomes; a constant sample is widened by 0.5 each
    /// way. The network scale is the sample mean and standard deviation, so
    /// a few far outliers do not squeeze the bulk of the data.
    pub fn from_outcomes<S: Real>(outcomes: &[S], padding_fraction: f64) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum, mut sq) = (0.0, 0.0);
        for y in outcomes {
            let y = y.to_f64_lossy();
            lo = lo.min(y);
            hi = hi.max(y);
            sum += y;
            sq += y * y;
        }
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let mut z = ZSampler::new(lo, hi, padding_fraction)?;
        let n = outcomes.len() as f64;
        let mean = sum / n;
        let sd = (sq / n - mean * mean).max(0.0).sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            z.center = mean;
            z.scale = sd;
        }
        Ok(z)
    }

    pub fn pad(&self) -> f64 {
        self.padding_fraction * (self.high - self.low)
    }

    /// Support of the draws.
    pub fn bounds(&self) -> (f64, f64) {
        (self.low - self.pad(), self.high + self.pad())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = self.bounds();
        rng.random_range(a..b)
    }

    /// `(v - center) / scale`; networks see probes and outcomes on this scale.
    pub fn to_unit<S: Real>(&self, v: S) -> S {
        (v - S::c(self.center)) / S::c(self.scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub architecture: Architecture,
    /// Mixture size `J` for the monotone architecture.
    pub monotone_components: usize,
    pub batch_size: usize,
    /// Probe draws per datum per minibatch.
    pub probes_per_datum: usize,
    pub max_epochs: usize,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<usize>,
    /// Epochs without holdout improvement before stopping.
    pub patience: usize,
    /// Learning-rate multiplier applied after every `decay_patience` epochs
    /// without holdout improvement; 1 disables the schedule.
    pub lr_decay: f64,
    pub decay_patience: usize,
    /// Holdout improvements smaller than this do not reset the patience
    /// counter, though the better parameters are still kept.
    pub min_delta: f64,
    pub holdout_fraction: f64,
    pub padding_fraction: f64,
    pub adam: AdamConfig,
    pub standardize_covariates: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            hidden_widths: vec![100],
            activation: Activation::Relu,
            architecture: Architecture::Plain,
            monotone_components: 10,
            batch_size: 128,
            probes_per_datum: 10,
            max_epochs: 3000,
            max_steps: None,
            patience: 50,
            lr_decay: 1.0,
            decay_patience: 10,
            min_delta: 0.0,
            holdout_fraction: 0.2,
            padding_fraction: 0.1,
            adam: AdamConfig::default(),
            standardize_covariates: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CcnError::InvalidConfig(m.to_string()));
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.batch_size == 0 || self.probes_per_datum == 0 || self.max_epochs == 0 {
            return bad("batch_size, probes_per_datum and max_epochs must be >= 1");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if !(self.padding_fraction >= 0.0) {
            return bad("padding_fraction must be >= 0");
        }
        if self.architecture == Architecture::Monotone && self.monotone_components == 0 {
            return bad("monotone_components must be >= 1");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_patience == 0 {
            return bad("lr_decay must lie in (0, 1] and decay_patience must be >= 1");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be >= 0");
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// A trained pair of conditional CDF networks.
///
/// Read-only after training; safe to share across threads for evaluation.
#[derive(Clone, Debug)]
pub struct CdfModel<S> {
    pub(crate) nets: [CdfNetwork<S>; 2],
    pub(crate) sampler: ZSampler,
    pub(crate) standardizer: Standardizer,
    pub(crate) representation: Option<Representation<S>>,
    pub(crate) report: Option<TrainReport>,
}

impl<S: Real> CdfModel<S> {
    pub fn from_parts(
        nets: [CdfNetwork<S>; 2],
        sampler: ZSampler,
        standardizer: Standardizer,
        representation: Option<Representation<S>>,
    ) -> Result<Self> {
        let feature_dim = match &representation {
            Some(r) => r.dim(),
            None => standardizer.dim(),
        };
        for net in &nets {
            if net.feature_dim() != feature_dim {
                return Err(CcnError::DimensionMismatch {
                    context: "g network input",
                    expected: feature_dim,
                    actual: net.feature_dim(),
                });
            }
        }
        if nets[0].architecture() != nets[1].architecture() {
            return Err(CcnError::InvalidConfig("g0 and g1 must share an architecture".into()));
        }
        Ok(CdfModel { nets, sampler, standardizer, representation, report: None })
    }

    pub fn covariate_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn architecture(&self) -> Architecture {
        self.nets[0].architecture()
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.sampler.low, self.sampler.high)
    }

    pub fn sampler(&self) -> &ZSampler {
        &self.sampler
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn network(&self, arm: Arm) -> &CdfNetwork<S> {
        &self.nets[arm.index()]
    }

    pub fn representation(&self) -> Option<&Representation<S>> {
        self.representation.as_ref()
    }

    pub fn report(&self) -> Option<&TrainReport> {
        self.report.as_ref()
    }

    /// Input of `g0`/`g1` for raw covariates `x`.
    pub fn features(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.covariate_dim() {
            return Err(CcnError::DimensionMismatch {
                context: "covariate vector",
                expected: self.covariate_dim(),
                actual: x.len(),
            });
        }
        let xs = self.standardizer.apply(x);
        match &self.representation {
            Some(r) => r.features(&xs),
            None => Ok(xs),
        }
    }

    /// Raw network outputs `g_arm(z, x)`; not guaranteed monotone for the
    /// plain architecture.
    pub fn g_values(&self, x: &[S], arm: Arm, zs: &[S]) -> Result<Vec<S>> {
        let f = self.features(x)?;
        let unit: Vec<S> = zs.iter().map(|&z| self.sampler.to_unit(z)).collect();
        self.nets[arm.index()].eval_many(&f, &unit)
    }

    pub fn cdf(&self, x: &[S], arm: Arm, y: S) -> Result<S> {
        Ok(self.g_values(x, arm, &[y])?[0])
    }

    /// Even grid over the padded probe range.
    pub fn grid(&self, grid_size: usize) -> Result<Vec<S>> {
        if grid_size < 2 {
            return Err(CcnError::InvalidConfig(format!("grid_size must be >= 2, got {grid_size}")));
        }
        let (a, b) = self.sampler.bounds();
        Ok((0..grid_size).map(|i| S::c(a + (b - a) * i as f64 / (grid_size - 1) as f64)).collect())
    }

    /// CDF sketch of `Y(arm) | X = x`, isotonically projected.
    pub fn estimate_cdf(&self, x: &[S], arm: Arm, grid_size: usize) -> Result<CdfCurve<S>> {
        let grid = self.grid(grid_size)?;
        let raw = self.g_values(x, arm, &grid)?;
        CdfCurve::from_raw(grid, &raw)
    }

    pub fn quantile(&self, x: &[S], arm: Arm, q: S) -> Result<QuantileEstimate<S>> {
        if !(q > S::zero() && q < S::one()) {
            return Err(CcnError::InvalidConfig(format!("quantile level must lie in (0, 1), got {q}")));
        }
        Ok(self.estimate_cdf(x, arm, DEFAULT_GRID)?.quantile(q))
    }

    /// Inverse-transform samples from the estimated `Y(arm) | X = x`.
    pub fn sample_outcomes(&self, x: &[S], arm: Arm, n_samples: usize, seed: u64) -> Result<Vec<S>> {
        if n_samples == 0 {
            return Err(CcnError::InvalidConfig("n_samples must be >= 1".into()));
        }
        let curve = self.estimate_cdf(x, arm, DEFAULT_GRID)?;
        Ok(curve.sample(n_samples, &mut seeded(seed)))
    }

    /// `Pr[Y(arm) in (y - eps, y + eps) | X = x]`, floored at 1e-12.
    pub fn neighborhood_prob(&self, x: &[S], arm: Arm, y: S, eps: S) -> Result<S> {
        if !(eps > S::zero()) {
            return Err(CcnError::InvalidConfig(format!("eps must be positive, got {eps}")));
        }
        let v = self.g_values(x, arm, &[y - eps, y + eps])?;
        Ok((v[1] - v[0]).max(S::c(NEIGHBORHOOD_FLOOR)))
    }

    /// Mean of the estimated `Y(arm) | X = x`.
    pub fn mean(&self, x: &[S], arm: Arm) -> Result<S> {
        Ok(self.estimate_cdf(x, arm, DEFAULT_GRID)?.mean())
    }
}

/// Fits `g0` on control rows and `g1` on treated rows.
///
/// Identification assumes positivity, consistency and unconfoundedness;
/// only positivity is checked (both arms must be non-empty).
pub fn train_ccn<S: Real>(data: &Dataset<S>, config: &TrainConfig) -> Result<CdfModel<S>> {
    fit(data, config, None)
}
