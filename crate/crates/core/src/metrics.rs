//! Scores for estimated potential-outcome distributions: PEHE, the
//! neighbourhood log-likelihood, utility contrasts and their decision AUC,
//! and predictive interval widths.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ccn::{CdfModel, QuantileEstimate, NEIGHBORHOOD_FLOOR};
use crate::data::{Arm, Dataset};
use crate::error::{CcnError, Result};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Real;
use crate::scenarios::ScenarioOracle;
use crate::utility::UtilitySpec;

/// Anything that can describe `Y(arm) | X = x`: a trained model, the true
/// laws of a scenario, or a hand-built test double.
pub trait PotentialOutcomeModel: Sync {
    fn cdf(&self, x: &[f64], arm: Arm, y: f64) -> Result<f64>;

    fn sample_outcomes(&self, x: &[f64], arm: Arm, n_samples: usize, seed: u64) -> Result<Vec<f64>>;

    fn mean(&self, x: &[f64], arm: Arm) -> Result<f64>;

    fn quantile(&self, x: &[f64], arm: Arm, q: f64) -> Result<QuantileEstimate<f64>>;

    fn neighborhood_prob(&self, x: &[f64], arm: Arm, y: f64, eps: f64) -> Result<f64> {
        Ok((self.cdf(x, arm, y + eps)? - self.cdf(x, arm, y - eps)?).max(NEIGHBORHOOD_FLOOR))
    }
}

fn to_s<S: Real>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&v| S::c(v)).collect()
}

impl<S: Real> PotentialOutcomeModel for CdfModel<S> {
    fn cdf(&self, x: &[f64], arm: Arm, y: f64) -> Result<f64> {
        Ok(CdfModel::cdf(self, &to_s::<S>(x), arm, S::c(y))?.to_f64_lossy())
    }

    fn sample_outcomes(&self, x: &[f64], arm: Arm, n: usize, seed: u64) -> Result<Vec<f64>> {
        let s = CdfModel::sample_outcomes(self, &to_s::<S>(x), arm, n, seed)?;
        Ok(s.into_iter().map(|v| v.to_f64_lossy()).collect())
    }

    fn mean(&self, x: &[f64], arm: Arm) -> Result<f64> {
        Ok(CdfModel::mean(self, &to_s::<S>(x), arm)?.to_f64_lossy())
    }

    fn quantile(&self, x: &[f64], arm: Arm, q: f64) -> Result<QuantileEstimate<f64>> {
        let e = CdfModel::quantile(self, &to_s::<S>(x), arm, S::c(q))?;
        Ok(QuantileEstimate { value: e.value.to_f64_lossy(), extrapolated: e.extrapolated })
    }

    fn neighborhood_prob(&self, x: &[f64], arm: Arm, y: f64, eps: f64) -> Result<f64> {
        Ok(CdfModel::neighborhood_prob(self, &to_s::<S>(x), arm, S::c(y), S::c(eps))?.to_f64_lossy())
    }
}

/// The true conditional laws of a scenario, viewed as a model.
#[derive(Clone, Copy, Debug)]
pub struct OracleModel<'a>(pub &'a ScenarioOracle);

impl PotentialOutcomeModel for OracleModel<'_> {
    fn cdf(&self, x: &[f64], arm: Arm, y: f64) -> Result<f64> {
        self.0.true_cdf(arm, x, y)
    }

    fn sample_outcomes(&self, x: &[f64], arm: Arm, n: usize, seed: u64) -> Result<Vec<f64>> {
        let law = self.0.law(arm, x)?;
        let mut rng = seeded(seed);
        Ok((0..n).map(|_| law.sample(&mut rng)).collect())
    }

    fn mean(&self, x: &[f64], arm: Arm) -> Result<f64> {
        self.0.true_mean(arm, x)
    }

    fn quantile(&self, x: &[f64], arm: Arm, q: f64) -> Result<QuantileEstimate<f64>> {
        Ok(QuantileEstimate { value: self.0.true_quantile(arm, x, q)?, extrapolated: false })
    }
}

/// Root mean squared difference between estimated and true CATEs.
pub fn pehe(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    if tau_hat.len() != tau_true.len() || tau_hat.is_empty() {
        return Err(CcnError::DimensionMismatch {
            context: "pehe inputs",
            expected: tau_true.len(),
            actual: tau_hat.len(),
        });
    }
    let mse = tau_hat.iter().zip(tau_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

/// Mean over rows and both arms of the log probability the model puts on
/// an `eps`-ball around each potential outcome.
pub fn approx_ll<M: PotentialOutcomeModel + ?Sized>(model: &M, test: &Dataset<f64>, eps: f64) -> Result<f64> {
    let pot =
        test.potential_outcomes().ok_or_else(|| CcnError::InvalidData("LL needs both potential outcomes".into()))?;
    let mut total = 0.0;
    for i in 0..test.n() {
        for arm in Arm::BOTH {
            total += model.neighborhood_prob(test.row(i), arm, pot[arm.index()][i], eps)?.ln();
        }
    }
    Ok(total / (2 * test.n()) as f64)
}

/// Like [`approx_ll`] but on the observed arm only, for data without
/// counterfactuals.
pub fn factual_ll<M: PotentialOutcomeModel + ?Sized>(model: &M, data: &Dataset<f64>, eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.n() {
        total += model.neighborhood_prob(data.row(i), data.arm(i), data.outcome()[i], eps)?.ln();
    }
    Ok(total / data.n() as f64)
}

/// Monte Carlo estimate of `E[U1(Y(1))] - E[U0(Y(0))]` under the model,
/// for row `i` of the utility's per-individual table.
pub fn utility_contrast<M: PotentialOutcomeModel + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &UtilitySpec,
    i: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(CcnError::InvalidConfig("n_samples must be >= 1".into()));
    }
    let ind = spec.individual(i)?;
    let mean_u = |arm: Arm, u: &crate::utility::UtilityFn| -> Result<f64> {
        let s = model.sample_outcomes(x, arm, n_samples, derive_seed(seed, arm.index() as u64))?;
        Ok(s.iter().map(|&g| u.eval(g, x, ind)).sum::<f64>() / n_samples as f64)
    };
    Ok(mean_u(Arm::Treated, &spec.u1)? - mean_u(Arm::Control, &spec.u0)?)
}

/// Probability that a random positive (true contrast > 0) outranks a random
/// negative, ties counting one half.
pub fn decision_auc(contrast_hat: &[f64], contrast_true: &[f64]) -> Result<f64> {
    if contrast_hat.len() != contrast_true.len() {
        return Err(CcnError::DimensionMismatch {
            context: "auc inputs",
            expected: contrast_true.len(),
            actual: contrast_hat.len(),
        });
    }
    let n_pos = contrast_true.iter().filter(|&&c| c > 0.0).count();
    let n_neg = contrast_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CcnError::AucUndefined);
    }
    if contrast_hat.iter().any(|v| v.is_nan()) {
        return Err(CcnError::InvalidData("NaN score in AUC input".into()));
    }
    // Average ranks over tied blocks.
    let mut order: Vec<usize> = (0..contrast_hat.len()).collect();
    order.sort_by(|&a, &b| contrast_hat[a].total_cmp(&contrast_hat[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && contrast_hat[order[end]] == contrast_hat[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            if contrast_true[k] > 0.0 {
                rank_sum_pos += avg;
            }
        }
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalWidth {
    pub width: f64,
    /// Either endpoint fell outside the levels the curve attains.
    pub extrapolated: bool,
}

/// Width of the central `coverage` predictive interval.
pub fn interval_width<M: PotentialOutcomeModel + ?Sized>(
    model: &M,
    x: &[f64],
    arm: Arm,
    coverage: f64,
) -> Result<IntervalWidth> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(CcnError::InvalidConfig(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    let hi = model.quantile(x, arm, (1.0 + coverage) / 2.0)?;
    let lo = model.quantile(x, arm, (1.0 - coverage) / 2.0)?;
    let extrapolated = hi.extrapolated || lo.extrapolated;
    if extrapolated {
        log::warn!("interval endpoint extrapolated at coverage {coverage}");
    }
    Ok(IntervalWidth { width: (hi.value - lo.value).max(0.0), extrapolated })
}

/// One evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub index: usize,
    pub tau_hat: f64,
    pub tau: f64,
    pub contrast_hat: f64,
    pub contrast_true: f64,
    /// `1{contrast_true > 0}`.
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pehe: f64,
    pub ll: f64,
    /// `None` when the true decision labels contain a single class.
    pub auc: Option<f64>,
    pub per_point: Option<Vec<PointRow>>,
}

pub const PER_POINT_HEADER: [&str; 6] = ["index", "tau_hat", "tau", "contrast_hat", "contrast_true", "label"];

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_per_point_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(PER_POINT_HEADER)?;
        for r in self.per_point.iter().flatten() {
            out.write_record([
                r.index.to_string(),
                r.tau_hat.to_string(),
                r.tau.to_string(),
                r.contrast_hat.to_string(),
                r.contrast_true.to_string(),
                r.label.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Settings for [`evaluate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Neighbourhood radius of the log-likelihood.
    pub eps: f64,
    pub utility: crate::utility::BuiltinUtility,
    pub n_samples: usize,
    /// Coverage of the reported interval widths.
    pub coverage: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { eps: 0.2, utility: crate::utility::BuiltinUtility::Cate, n_samples: 3000, coverage: 0.9 }
    }
}

/// Scores a model on a test set with an oracle: PEHE against the true CATE,
/// LL over both potential outcomes, and decision AUC for the configured
/// utility.
pub fn evaluate<M: PotentialOutcomeModel + ?Sized>(
    model: &M,
    test: &Dataset<f64>,
    oracle: &ScenarioOracle,
    config: &EvalConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let spec = config.utility.build(test, oracle, seed)?;
    spec.validate()?;
    let mut rows = Vec::with_capacity(test.n());
    for i in 0..test.n() {
        let x = test.row(i);
        let tau_hat = model.mean(x, Arm::Treated)? - model.mean(x, Arm::Control)?;
        let tau = oracle.true_cate(x)?;
        let contrast_hat = utility_contrast(model, x, &spec, i, config.n_samples, derive_seed(seed, i as u64))?;
        let contrast_true = spec.true_contrast(oracle, x, i)?;
        rows.push(PointRow {
            index: i,
            tau_hat,
            tau,
            contrast_hat,
            contrast_true,
            label: u8::from(contrast_true > 0.0),
        });
    }
    let tau_hat: Vec<f64> = rows.iter().map(|r| r.tau_hat).collect();
    let tau: Vec<f64> = rows.iter().map(|r| r.tau).collect();
    let ch: Vec<f64> = rows.iter().map(|r| r.contrast_hat).collect();
    let ct: Vec<f64> = rows.iter().map(|r| r.contrast_true).collect();
    let auc = match decision_auc(&ch, &ct) {
        Ok(a) => Some(a),
        Err(CcnError::AucUndefined) => {
            log::warn!("decision AUC undefined: all true contrasts share one sign");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        pehe: pehe(&tau_hat, &tau)?,
        ll: approx_ll(model, test, config.eps)?,
        auc,
        per_point: Some(rows),
    })
}
