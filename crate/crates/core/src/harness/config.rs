use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ccn::TrainConfig;
use crate::error::{CcnError, Result};
use crate::fccn::{FccnConfig, RepresentationMode};
use crate::metrics::EvalConfig;
use crate::scenarios::{ScenarioConfig, ScenarioName};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    #[serde(flatten)]
    pub config: ScenarioConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ccn,
    Fccn,
}

/// A method plus the FCCN component switches. The switches are ignored for
/// plain CCN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSpec {
    pub kind: Method,
    /// Wasserstein balancing of `phi_w`.
    pub wass: bool,
    /// Assignment loss on `phi_a`.
    pub assign: bool,
    /// Estimated propensity appended to the features.
    pub ps: bool,
}

impl Default for MethodSpec {
    fn default() -> Self {
        MethodSpec::fccn()
    }
}

impl MethodSpec {
    pub fn ccn() -> Self {
        MethodSpec { kind: Method::Ccn, wass: false, assign: false, ps: false }
    }

    pub fn fccn() -> Self {
        MethodSpec { kind: Method::Fccn, wass: true, assign: true, ps: true }
    }

    pub fn label(&self) -> String {
        match self.kind {
            Method::Ccn => "CCN".into(),
            Method::Fccn => match (self.wass, self.assign, self.ps) {
                (true, true, true) => "FCCN".into(),
                (false, false, false) => "FCCN-off".into(),
                _ => {
                    let parts: Vec<&str> = [(self.wass, "Wass"), (self.assign, "Assign"), (self.ps, "PS")]
                        .into_iter()
                        .filter_map(|(on, name)| on.then_some(name))
                        .collect();
                    parts.join("+")
                }
            },
        }
    }

    /// The FCCN settings this method trains with, or `None` for plain CCN.
    /// Switched-off components get zero weight; with every switch off the
    /// representation is the raw covariates, which trains exactly like CCN.
    pub fn resolve(&self, base: &FccnConfig) -> Option<FccnConfig> {
        if self.kind == Method::Ccn {
            return None;
        }
        if !(self.wass || self.assign || self.ps) {
            return Some(FccnConfig {
                alpha: 0.0,
                beta: 0.0,
                propensity_feature: false,
                representation: RepresentationMode::Raw,
                ..base.clone()
            });
        }
        Some(FccnConfig {
            alpha: if self.wass { base.alpha } else { 0.0 },
            beta: if self.assign { base.beta } else { 0.0 },
            propensity_feature: self.ps,
            ..base.clone()
        })
    }
}

/// One experiment. Every field has a default, so a config file only needs
/// the keys it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed; replication `r` uses `derive_seed(seed, r)`.
    pub seed: u64,
    pub scenario: ScenarioSpec,
    pub method: MethodSpec,
    pub train: TrainConfig,
    pub fccn: FccnConfig,
    pub replications: usize,
    /// Share of each generated dataset held out for scoring.
    pub test_fraction: f64,
    pub eval: EvalConfig,
    pub output_dir: Option<PathBuf>,
    /// Also write `points_rep{r}.csv` for every replication.
    pub write_points: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            scenario: ScenarioSpec { name: ScenarioName::BetaHetero, config: ScenarioConfig::default() },
            method: MethodSpec::default(),
            train: TrainConfig::default(),
            fccn: FccnConfig::default(),
            replications: 1,
            test_fraction: 0.2,
            eval: EvalConfig::default(),
            output_dir: None,
            write_points: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(CcnError::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CcnError::InvalidConfig(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.eval.eps > 0.0) {
            return Err(CcnError::InvalidConfig("eval.eps must be positive".into()));
        }
        if self.eval.n_samples == 0 {
            return Err(CcnError::InvalidConfig("eval.n_samples must be >= 1".into()));
        }
        if !(self.eval.coverage > 0.0 && self.eval.coverage < 1.0) {
            return Err(CcnError::InvalidConfig("eval.coverage must lie in (0, 1)".into()));
        }
        self.scenario.config.validate()?;
        self.train.validate()?;
        self.fccn.validate()
    }

    /// Parses a JSON config, applies `key=value` overrides and validates.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: Value =
            if text.trim().is_empty() { Value::Object(Default::default()) } else { serde_json::from_str(text)? };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| CcnError::InvalidConfig(format!("override `{o}` is not of the form key=value")))?;
            apply_override(&mut tree, key.trim(), value.trim())?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets the dotted `key` in a JSON tree, creating objects on the way.
/// `value` is read as JSON when it parses and as a string otherwise, so
/// `train.hidden_widths=[50,50]`, `train.seed=3` and `scenario.name=logistic`
/// all work.
pub fn apply_override(tree: &mut Value, key: &str, value: &str) -> Result<()> {
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CcnError::InvalidConfig(format!("bad override key `{key}`")));
    }
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut node = tree;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(CcnError::InvalidConfig(format!("override `{key}` descends into a non-object")));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if parts.peek().is_none() {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one part")
}
