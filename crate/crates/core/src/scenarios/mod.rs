//! Synthetic data-generating processes with exact oracles.
//!
//! Each generator draws covariates, both potential outcomes and a treatment
//! assignment, and returns a [`ScenarioOracle`] that knows the true
//! conditional laws, CATE and propensity. Randomness is split into
//! independent streams (covariates, outcomes, noise columns, treatment), so
//! changing the imbalance knobs never changes the outcome draws.

mod laws;

pub use laws::{normal_cdf, Law};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ccn::NEIGHBORHOOD_FLOOR;
use crate::data::{Arm, Dataset};
use crate::error::{CcnError, Result};
use crate::rng::{stream_rng, Stream};

const SCALE_FLOOR: f64 = 1e-6;
const BETA_PARAM_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFamily {
    Gumbel,
    Gamma,
    Weibull,
}

/// How the exponential noise of the education-style design is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpParam {
    /// `exp(2)` has rate 2 (mean 0.5).
    #[default]
    Rate,
    /// `exp(2)` has mean 2.
    Mean,
}

/// Every generator the harness can name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Gaussian1d,
    Multimodal,
    Logistic,
    Gumbel,
    Gamma,
    Weibull,
    BetaHetero,
    EduLike,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 8] = [
        ScenarioName::Gaussian1d,
        ScenarioName::Multimodal,
        ScenarioName::Logistic,
        ScenarioName::Gumbel,
        ScenarioName::Gamma,
        ScenarioName::Weibull,
        ScenarioName::BetaHetero,
        ScenarioName::EduLike,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n: usize,
    pub seed: u64,
    /// Irrelevant standard-normal covariates appended to the design.
    pub noise_dims: usize,
    /// Multiplier on the propensity coefficients.
    pub propensity_scale: f64,
    /// Rows whose true propensity lies strictly inside this band are removed.
    pub truncation: Option<(f64, f64)>,
    pub exp_param: ExpParam,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 2000,
            seed: 0,
            noise_dims: 0,
            propensity_scale: 1.0,
            truncation: None,
            exp_param: ExpParam::Rate,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CcnError::InvalidConfig("scenario needs n >= 1".into()));
        }
        if !(self.propensity_scale >= 0.0 && self.propensity_scale.is_finite()) {
            return Err(CcnError::InvalidConfig(format!(
                "propensity_scale must be >= 0, got {}",
                self.propensity_scale
            )));
        }
        if let Some((lo, hi)) = self.truncation {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(CcnError::InvalidConfig(format!(
                    "truncation band must satisfy 0 < low < high < 1, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// A single-hidden-layer sigmoid net with fixed weights, used as a smooth
/// mean function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenNet {
    pub inputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl FrozenNet {
    fn random<R: Rng + ?Sized>(inputs: usize, hidden: usize, offset: f64, rng: &mut R) -> FrozenNet {
        let mut normal = |s: f64| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        };
        let w1 = (0..inputs * hidden).map(|_| normal(0.6)).collect();
        let b1 = (0..hidden).map(|_| normal(0.5)).collect();
        let w2 = (0..hidden).map(|_| normal(2.0 / (hidden as f64).sqrt())).collect();
        FrozenNet { inputs, w1, b1, w2, b2: offset }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = self.b2;
        for (j, (b, w)) in self.b1.iter().zip(&self.w2).enumerate() {
            let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
            let pre: f64 = b + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            out += w / (1.0 + (-pre).exp());
        }
        out
    }
}

/// The outcome and assignment mechanism of one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Design {
    /// `x ~ N(0,1)`, `Y(0) ~ N(x, 1)`, `Y(1) ~ N(x + 1, 1)`.
    Gaussian1d,
    /// Gaussian/exponential mixtures with assignment `1{x > 0}`.
    Multimodal,
    /// Logistic outcomes with trigonometric location and `|sum x| + 0.5` scale.
    Logistic,
    TailFamily {
        family: TailFamily,
    },
    /// Shifted Beta outcomes with covariate-dependent shape parameters.
    BetaHetero,
    /// Frozen-net means plus Gaussian (control) or exponential (treated)
    /// noise scaled by `2 - m`, where `m` is the last base covariate.
    EduLike {
        exp_param: ExpParam,
        f0: FrozenNet,
        f1: FrozenNet,
    },
}

/// Ground truth of a generated dataset. Serializes to JSON so external
/// estimators can be scored against the same truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOracle {
    pub design: Design,
    pub seed: u64,
    /// Covariates the outcome and assignment depend on; any further
    /// columns are noise.
    pub base_dim: usize,
    pub noise_dims: usize,
    /// Unscaled logit coefficients of the assignment model.
    pub propensity_beta: Vec<f64>,
    pub propensity_scale: f64,
    pub truncation: Option<(f64, f64)>,
}

fn sum(x: &[f64]) -> f64 {
    x.iter().sum()
}

impl ScenarioOracle {
    pub fn covariate_dim(&self) -> usize {
        self.base_dim + self.noise_dims
    }

    /// Column holding the binary `m` indicator, for designs that have one.
    pub fn indicator_column(&self) -> Option<usize> {
        match self.design {
            Design::EduLike { .. } => Some(self.base_dim - 1),
            _ => None,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() < self.base_dim {
            return Err(CcnError::DimensionMismatch {
                context: "oracle covariates",
                expected: self.covariate_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Conditional law of `Y(arm) | X = x`.
    pub fn law(&self, arm: Arm, x: &[f64]) -> Result<Law> {
        self.check(x)?;
        let treated = arm == Arm::Treated;
        let law = match &self.design {
            Design::Gaussian1d => Law::Normal { mean: x[0] + if treated { 1.0 } else { 0.0 }, sd: 1.0 },
            Design::Multimodal => {
                let comps = if treated {
                    vec![Law::Normal { mean: 6.0 + x[0], sd: 1.5 }, Law::ShiftedExp { rate: 1.0, shift: x[0] }]
                } else {
                    vec![Law::Normal { mean: -2.0 + x[0], sd: 1.0 }, Law::Normal { mean: 2.0 + x[0], sd: 1.0 }]
                };
                Law::Mixture { weights: vec![0.5, 0.5], components: comps }
            }
            Design::Logistic => {
                let pi = std::f64::consts::PI;
                let (a, b) = (x[0] * pi + x[1] * pi, x[2] * pi);
                let location = if treated { a.cos() + b.cos() } else { a.sin() + b.sin() };
                Law::Logistic { location, scale: sum(&x[..3]).abs() + 0.5 }
            }
            Design::TailFamily { family } => {
                let (a, b) = (sum(&x[..5]), sum(&x[5..10]));
                // u: sin/cos of the first half against cos/sin of the second.
                let u = (a.sin() + b.cos()).abs().sqrt();
                let v = (a.cos() + b.sin()).abs().sqrt();
                let (u, v) = if treated { (v, u) } else { (u, v) };
                match family {
                    TailFamily::Gumbel => {
                        let s = sum(&x[..10]);
                        let (lo, sc) = if treated {
                            (s.cos().powi(2), s.sin().powi(2))
                        } else {
                            (s.sin().powi(2), s.cos().powi(2))
                        };
                        Law::Gumbel { location: 5.0 * lo, scale: (5.0 * sc).max(SCALE_FLOOR) }
                    }
                    TailFamily::Gamma => Law::Gamma { shape: 4.0 * u + 0.5, scale: (2.0 * v).max(SCALE_FLOOR) },
                    TailFamily::Weibull => Law::Weibull { scale: (5.0 * u).max(SCALE_FLOOR), shape: 2.0 * v + 0.2 },
                }
            }
            Design::BetaHetero => {
                let p = x[..5].iter().map(|v| v.abs()).sum::<f64>() / 5.0;
                let q = x[5..10].iter().map(|v| v.abs()).sum::<f64>() / 5.0;
                let s = sum(&x[..10]);
                let (a, b, shift) = if treated { (q, p, s.cos()) } else { (p, q, s.sin()) };
                Law::ShiftedBeta { a: a.max(BETA_PARAM_FLOOR), b: b.max(BETA_PARAM_FLOOR), shift }
            }
            Design::EduLike { exp_param, f0, f1 } => {
                let base = &x[..self.base_dim];
                let spread = 2.0 - base[self.base_dim - 1];
                if treated {
                    let rate = match exp_param {
                        ExpParam::Rate => 2.0,
                        ExpParam::Mean => 0.5,
                    };
                    Law::ShiftedExp { rate: rate / spread, shift: f1.eval(base) }
                } else {
                    Law::Normal { mean: f0.eval(base), sd: 0.5 * spread }
                }
            }
        };
        Ok(law)
    }

    pub fn true_cdf(&self, arm: Arm, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.law(arm, x)?.cdf(y))
    }

    pub fn true_mean(&self, arm: Arm, x: &[f64]) -> Result<f64> {
        Ok(self.law(arm, x)?.mean())
    }

    pub fn true_quantile(&self, arm: Arm, x: &[f64], q: f64) -> Result<f64> {
        Ok(self.law(arm, x)?.quantile(q))
    }

    pub fn true_cate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.true_mean(Arm::Treated, x)? - self.true_mean(Arm::Control, x)?)
    }

    pub fn true_propensity(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        if self.propensity_scale == 0.0 {
            return Ok(0.5);
        }
        Ok(match self.design {
            Design::Multimodal => {
                if x[0] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => {
                let logit: f64 = self.propensity_beta.iter().zip(x).map(|(b, v)| b * v).sum();
                1.0 / (1.0 + (-self.propensity_scale * logit).exp())
            }
        })
    }

    /// Mean over rows and both arms of
    /// `log Pr(Y(t) in (y_t - eps, y_t + eps) | x)` under the true laws.
    pub fn true_ll_reference(&self, data: &Dataset<f64>, eps: f64) -> Result<f64> {
        let pot = data
            .potential_outcomes()
            .ok_or_else(|| CcnError::InvalidData("reference LL needs both potential outcomes".into()))?;
        let mut total = 0.0;
        for i in 0..data.n() {
            for arm in Arm::BOTH {
                let law = self.law(arm, data.row(i))?;
                let y = pot[arm.index()][i];
                total += (law.cdf(y + eps) - law.cdf(y - eps)).max(NEIGHBORHOOD_FLOOR).ln();
            }
        }
        Ok(total / (2 * data.n()) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ScenarioOracle> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Draws base covariates and both potential outcomes, then applies the
/// imbalance knobs and truncation from `cfg`.
fn generate_with<F>(
    cfg: &ScenarioConfig,
    mut oracle: ScenarioOracle,
    mut draw_x: F,
) -> Result<(Dataset<f64>, ScenarioOracle)>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> Vec<f64>,
{
    cfg.validate()?;
    oracle.seed = cfg.seed;
    let p = oracle.base_dim;
    let mut x_rng = stream_rng(cfg.seed, Stream::Covariates);
    let mut y_rng = stream_rng(cfg.seed, Stream::Outcomes);
    let mut xs = Vec::with_capacity(cfg.n * p);
    let (mut y0, mut y1) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    for _ in 0..cfg.n {
        let x = draw_x(&mut x_rng);
        y0.push(oracle.law(Arm::Control, &x)?.sample(&mut y_rng));
        y1.push(oracle.law(Arm::Treated, &x)?.sample(&mut y_rng));
        xs.extend(x);
    }
    let base = Dataset::new(xs, p, vec![0; cfg.n], y0.clone())?.with_potential_outcomes(y0, y1)?;
    let (data, mut oracle) = apply_imbalance_knobs(&base, &oracle, cfg)?;
    let data = match cfg.truncation {
        Some((lo, hi)) => {
            let mut keep = Vec::new();
            for i in 0..data.n() {
                let e = oracle.true_propensity(data.row(i))?;
                if !(e > lo && e < hi) {
                    keep.push(i);
                }
            }
            let d = data.subset(&keep);
            d.require_both_arms()?;
            oracle.truncation = Some((lo, hi));
            d
        }
        None => data,
    };
    Ok((data, oracle))
}

fn standard_normals(rng: &mut rand_chacha::ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

fn oracle(design: Design, base_dim: usize, beta: Vec<f64>) -> ScenarioOracle {
    ScenarioOracle {
        design,
        seed: 0,
        base_dim,
        noise_dims: 0,
        propensity_beta: beta,
        propensity_scale: 1.0,
        truncation: None,
    }
}

/// One covariate, logistic assignment on `x`, unit-variance Gaussian
/// outcomes with means `x` and `x + 1`.
pub fn gen_gaussian1d(cfg: &ScenarioConfig) -> Result<(Dataset<f64>, ScenarioOracle)> {
    generate_with(cfg, oracle(Design::Gaussian1d, 1, vec![1.0]), |r| standard_normals(r, 1))
}

pub fn gen_multimodal(cfg: &ScenarioConfig) -> Result<(Dataset<f64>, ScenarioOracle)> {
    generate_with(cfg, oracle(Design::Multimodal, 1, vec![]), |r| standard_normals(r, 1))
}

pub fn gen_logistic(cfg: &ScenarioConfig) -> Result<(Dataset<f64>, ScenarioOracle)> {
    generate_with(cfg, oracle(Design::Logistic, 3, vec![2.0; 3]), |r| standard_normals(r, 3))
}

pub fn gen_tail_family(cfg: &ScenarioConfig, family: TailFamily) -> Result<(Dataset<f64>, ScenarioOracle)> {
    generate_with(cfg, oracle(Design::TailFamily { family }, 10, vec![0.8; 10]), |r| standard_normals(r, 10))
}

pub fn gen_beta_hetero(cfg: &ScenarioConfig) -> Result<(Dataset<f64>, ScenarioOracle)> {
    generate_with(cfg, oracle(Design::BetaHetero, 10, vec![0.8; 10]), |r| standard_normals(r, 10))
}

/// Nine standard-normal covariates plus a Bernoulli(0.5) indicator `m` as
/// the tenth. The mean functions and assignment coefficients are drawn once
/// from the seed and stored in the oracle.
pub fn gen_edu_like(cfg: &ScenarioConfig) -> Result<(Dataset<f64>, ScenarioOracle)> {
    let mut frozen = stream_rng(cfg.seed, Stream::Frozen);
    let f0 = FrozenNet::random(10, 32, 0.0, &mut frozen);
    let f1 = FrozenNet::random(10, 32, 1.0, &mut frozen);
    let beta: Vec<f64> = (0..10).map(|_| frozen.random_range(-0.8..0.8)).collect();
    let design = Design::EduLike { exp_param: cfg.exp_param, f0, f1 };
    generate_with(cfg, oracle(design, 10, beta), |r| {
        let mut x = standard_normals(r, 9);
        x.push(if r.random_bool(0.5) { 1.0 } else { 0.0 });
        x
    })
}

pub fn generate(name: ScenarioName, cfg: &ScenarioConfig) -> Result<(Dataset<f64>, ScenarioOracle)> {
    match name {
        ScenarioName::Gaussian1d => gen_gaussian1d(cfg),
        ScenarioName::Multimodal => gen_multimodal(cfg),
        ScenarioName::Logistic => gen_logistic(cfg),
        ScenarioName::Gumbel => gen_tail_family(cfg, TailFamily::Gumbel),
        ScenarioName::Gamma => gen_tail_family(cfg, TailFamily::Gamma),
        ScenarioName::Weibull => gen_tail_family(cfg, TailFamily::Weibull),
        ScenarioName::BetaHetero => gen_beta_hetero(cfg),
        ScenarioName::EduLike => gen_edu_like(cfg),
    }
}

/// Appends `cfg.noise_dims` standard-normal columns and redraws the
/// treatment with the assignment coefficients scaled by
/// `cfg.propensity_scale`. Outcome laws are untouched; the observed outcome
/// follows the new assignment.
pub fn apply_imbalance_knobs(
    data: &Dataset<f64>,
    oracle: &ScenarioOracle,
    cfg: &ScenarioConfig,
) -> Result<(Dataset<f64>, ScenarioOracle)> {
    cfg.validate()?;
    let pot = data
        .potential_outcomes()
        .ok_or_else(|| CcnError::InvalidData("imbalance knobs need both potential outcomes".into()))?;
    let mut oracle = oracle.clone();
    oracle.propensity_scale = cfg.propensity_scale;
    let data = if cfg.noise_dims > 0 {
        let mut rng = stream_rng(cfg.seed, Stream::Noise);
        let extra: Vec<f64> = (0..data.n() * cfg.noise_dims).map(|_| StandardNormal.sample(&mut rng)).collect();
        oracle.noise_dims += cfg.noise_dims;
        data.append_columns(&extra, cfg.noise_dims)?
    } else {
        data.clone()
    };
    let mut rng = stream_rng(cfg.seed, Stream::Treatment);
    let mut treatment = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let e = oracle.true_propensity(data.row(i))?;
        let u: f64 = rng.random();
        treatment.push(u8::from(u < e));
    }
    let (y0, y1) = (pot[0].clone(), pot[1].clone());
    let outcome = (0..data.n()).map(|i| if treatment[i] == 1 { y1[i] } else { y0[i] }).collect();
    let out =
        Dataset::new(data.covariates().to_vec(), data.p(), treatment, outcome)?.with_potential_outcomes(y0, y1)?;
    Ok((out, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig { n, seed, ..ScenarioConfig::default() }
    }

    fn kolmogorov(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let f = cdf(*y);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn multimodal_oracle_values() {
        let (_, o) = gen_multimodal(&cfg(10, 0)).unwrap();
        assert!((o.true_cdf(Arm::Control, &[0.0], 0.0).unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 * 0.5 + 0.5 * normal_cdf(-4.0);
        assert!((o.true_cdf(Arm::Control, &[0.0], -2.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.25).abs() < 1e-4);
    }

    #[test]
    fn multimodal_assignment_is_deterministic_in_x() {
        let (d, _) = gen_multimodal(&cfg(500, 3)).unwrap();
        for i in 0..d.n() {
            assert_eq!(d.treatment()[i], u8::from(d.row(i)[0] > 0.0));
        }
    }

    #[test]
    fn logistic_design_at_origin() {
        let (_, o) = gen_logistic(&cfg(10, 0)).unwrap();
        let x = [0.0; 3];
        assert_eq!(o.true_propensity(&x).unwrap(), 0.5);
        assert!((o.true_cdf(Arm::Control, &x, 0.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tail_family_parameters() {
        let (_, o) = gen_tail_family(&cfg(10, 0), TailFamily::Gumbel).unwrap();
        match o.law(Arm::Control, &[0.0; 10]).unwrap() {
            Law::Gumbel { location, scale } => {
                assert_eq!(location, 0.0);
                assert_eq!(scale, 5.0);
            }
            other => panic!("{other:?}"),
        }
        let (_, o) = gen_tail_family(&cfg(10, 0), TailFamily::Weibull).unwrap();
        let x = [0.3, -0.2, 0.1, 0.5, 0.0, -1.0, 0.4, 0.2, 0.3, -0.1];
        if let Law::Weibull { scale, .. } = o.law(Arm::Treated, &x).unwrap() {
            let f = o.true_cdf(Arm::Treated, &x, scale).unwrap();
            assert!((f - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        } else {
            panic!("expected a Weibull law");
        }
    }

    #[test]
    fn gamma_mean_matches_monte_carlo() {
        let (_, o) = gen_tail_family(&cfg(10, 0), TailFamily::Gamma).unwrap();
        let x = [0.2, 0.1, -0.3, 0.7, 0.0, 0.5, -0.6, 0.2, 0.1, 0.3];
        let law = o.law(Arm::Control, &x).unwrap();
        let mut rng = crate::rng::seeded(9);
        let n = 100_000;
        let m = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m / law.mean() - 1.0).abs() < 0.01, "{m} vs {}", law.mean());
    }

    #[test]
    fn beta_hetero_support_and_symmetry() {
        let (d, o) = gen_beta_hetero(&cfg(2000, 5)).unwrap();
        let pot = d.potential_outcomes().unwrap();
        for i in 0..d.n() {
            let s = d.row(i).iter().sum::<f64>().sin();
            assert!(pot[0][i] >= s && pot[0][i] <= s + 1.0);
        }
        // |x_1..5| and |x_6..10| sums match, so a = b.
        let x = [1.0, -1.0, 0.5, 0.0, 0.5, -1.0, 1.0, 0.0, 0.5, -0.5];
        let shift = x.iter().sum::<f64>().sin();
        assert!((o.true_cdf(Arm::Control, &x, shift + 0.5).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn conditional_draws_match_oracles() {
        let designs = [
            ScenarioName::Multimodal,
            ScenarioName::Logistic,
            ScenarioName::Gumbel,
            ScenarioName::Gamma,
            ScenarioName::Weibull,
            ScenarioName::BetaHetero,
            ScenarioName::EduLike,
        ];
        for name in designs {
            let (d, o) = generate(name, &cfg(5, 1)).unwrap();
            let mut rng = crate::rng::seeded(11);
            for i in 0..d.n() {
                for arm in Arm::BOTH {
                    let law = o.law(arm, d.row(i)).unwrap();
                    let mut s: Vec<f64> = (0..20_000).map(|_| law.sample(&mut rng)).collect();
                    let k = kolmogorov(&mut s, |y| law.cdf(y));
                    assert!(k < 0.02, "{name:?} row {i} arm {arm:?}: {k}");
                }
            }
        }
    }

    #[test]
    fn edu_interval_widths() {
        let (_, o) = gen_edu_like(&cfg(10, 2)).unwrap();
        let width = |arm, m: f64| {
            let mut x = vec![0.1; 9];
            x.push(m);
            o.true_quantile(arm, &x, 0.95).unwrap() - o.true_quantile(arm, &x, 0.05).unwrap()
        };
        let z = 1.6448536269514722;
        assert!((width(Arm::Control, 1.0) - 2.0 * z * 0.5).abs() < 1e-6);
        assert!((width(Arm::Control, 0.0) - 2.0 * z).abs() < 1e-6);
        let e = (20.0f64.ln() - (20.0f64 / 19.0).ln()) / 2.0;
        assert!((width(Arm::Treated, 1.0) - e).abs() < 1e-6);
        assert!((width(Arm::Treated, 0.0) - 2.0 * e).abs() < 1e-6);
    }

    #[test]
    fn truncation_removes_the_band() {
        let c = ScenarioConfig {
            n: 3000,
            seed: 4,
            truncation: Some((0.3, 0.7)),
            propensity_scale: 2.0,
            ..ScenarioConfig::default()
        };
        let (d, o) = gen_edu_like(&c).unwrap();
        assert!(d.n() < 3000);
        for i in 0..d.n() {
            let e = o.true_propensity(d.row(i)).unwrap();
            assert!(!(e > 0.3 && e < 0.7));
        }
    }

    #[test]
    fn truncation_that_empties_an_arm_fails() {
        let c = ScenarioConfig {
            n: 50,
            seed: 1,
            truncation: Some((0.01, 0.99)),
            propensity_scale: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(gen_logistic(&c), Err(CcnError::EmptyArm { .. })));
    }

    #[test]
    fn knobs_identity_and_randomized_trial() {
        let (d, o) = gen_beta_hetero(&cfg(400, 8)).unwrap();
        let (d2, _) = apply_imbalance_knobs(&d, &o, &cfg(400, 99)).unwrap();
        assert_eq!(d.covariates(), d2.covariates());
        assert_eq!(d.potential_outcomes(), d2.potential_outcomes());
        let rct = ScenarioConfig { propensity_scale: 0.0, ..cfg(400, 8) };
        let (_, o3) = apply_imbalance_knobs(&d, &o, &rct).unwrap();
        for i in 0..d.n() {
            assert_eq!(o3.true_propensity(d.row(i)).unwrap(), 0.5);
        }
        let noisy = ScenarioConfig { noise_dims: 3, ..cfg(400, 8) };
        let (d4, o4) = apply_imbalance_knobs(&d, &o, &noisy).unwrap();
        assert_eq!(d4.p(), 13);
        assert_eq!(o4.covariate_dim(), 13);
        assert_eq!(
            o4.true_cdf(Arm::Control, d4.row(0), 0.3).unwrap(),
            o.true_cdf(Arm::Control, d.row(0), 0.3).unwrap()
        );
    }

    #[test]
    fn stronger_assignment_shrinks_overlap() {
        let mass = |scale: f64| {
            let c = ScenarioConfig { n: 20_000, seed: 6, propensity_scale: scale, ..ScenarioConfig::default() };
            let (d, o) = gen_tail_family(&c, TailFamily::Gamma).unwrap();
            (0..d.n())
                .filter(|&i| {
                    let e = o.true_propensity(d.row(i)).unwrap();
                    e > 0.3 && e < 0.7
                })
                .count()
        };
        assert!(mass(4.0) < mass(1.0));
    }

    #[test]
    fn generators_are_seed_deterministic_and_oracles_round_trip() {
        for name in ScenarioName::ALL {
            let (a, oa) = generate(name, &cfg(50, 12)).unwrap();
            let (b, ob) = generate(name, &cfg(50, 12)).unwrap();
            assert_eq!(a, b);
            assert_eq!(oa, ob);
            let back = ScenarioOracle::from_json(&oa.to_json().unwrap()).unwrap();
            assert_eq!(back, oa);
        }
    }

    #[test]
    fn oracle_cdfs_are_monotone_with_limits() {
        for name in ScenarioName::ALL {
            let (d, o) = generate(name, &cfg(2000, 3)).unwrap();
            let (lo, hi) = d.outcome().iter().fold((f64::MAX, f64::MIN), |(a, b), y| (a.min(*y), b.max(*y)));
            let range = hi - lo;
            for i in 0..5 {
                for arm in Arm::BOTH {
                    let law = o.law(arm, d.row(i)).unwrap();
                    assert!(law.cdf(lo - 10.0 * range) < 1e-6, "{name:?}");
                    let top = law.cdf(hi + 10.0 * range);
                    assert!(top > 1.0 - 1e-6, "{name:?}: {top}");
                    let mut prev = 0.0;
                    for k in 0..200 {
                        let f = law.cdf(lo - range + 3.0 * range * k as f64 / 199.0);
                        assert!(f >= prev - 1e-12);
                        prev = f;
                    }
                }
            }
        }
    }
}
