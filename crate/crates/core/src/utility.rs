//! Utility functions over outcomes, at four scopes: one function for both
//! arms, one per arm, functions that also read covariates, and functions
//! with per-individual parameters.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CcnError, Result};
use crate::rng::{stream_rng, Stream};
use crate::scenarios::{Law, ScenarioOracle};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Unified,
    TreatmentSpecific,
    FeatureDependent,
    Personalized,
}

/// Per-individual parameters: a threshold `v` and an indicator `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub v: f64,
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityFn {
    /// `slope * gamma + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `slope * gamma + weights . x + intercept`.
    FeatureLinear { slope: f64, weights: Vec<f64>, intercept: f64 },
    /// `1{gamma > base + v_i [if individual] + m_gap * (1 - m_i)}`.
    Threshold { base: f64, individual: bool, m_gap: f64 },
}

impl UtilityFn {
    fn reads_features(&self) -> bool {
        matches!(self, UtilityFn::FeatureLinear { .. })
    }

    fn reads_individual(&self) -> bool {
        matches!(self, UtilityFn::Threshold { individual, m_gap, .. } if *individual || *m_gap != 0.0)
    }

    fn threshold(&self, ind: Option<&Individual>) -> Option<f64> {
        match self {
            UtilityFn::Threshold { base, individual, m_gap } => {
                let ind = ind.copied().unwrap_or(Individual { v: 0.0, m: 1.0 });
                Some(base + if *individual { ind.v } else { 0.0 } + m_gap * (1.0 - ind.m))
            }
            _ => None,
        }
    }

    pub fn eval(&self, gamma: f64, x: &[f64], ind: Option<&Individual>) -> f64 {
        match self {
            UtilityFn::Linear { slope, intercept } => slope * gamma + intercept,
            UtilityFn::FeatureLinear { slope, weights, intercept } => {
                slope * gamma + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + intercept
            }
            UtilityFn::Threshold { .. } => {
                let c = self.threshold(ind).expect("threshold utility");
                if gamma > c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact `E[U(Y)]` for `Y ~ law`.
    pub fn expectation(&self, law: &Law, x: &[f64], ind: Option<&Individual>) -> f64 {
        match self {
            UtilityFn::Threshold { .. } => 1.0 - law.cdf(self.threshold(ind).expect("threshold utility")),
            _ => self.eval(law.mean(), x, ind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub scope: Scope,
    pub u0: UtilityFn,
    pub u1: UtilityFn,
    /// One entry per evaluation row, for personalized utilities.
    pub per_individual: Option<Vec<Individual>>,
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CcnError::InvalidConfig(m.to_string()));
        let reads_x = self.u0.reads_features() || self.u1.reads_features();
        let reads_ind = self.u0.reads_individual() || self.u1.reads_individual();
        match self.scope {
            Scope::Unified => {
                if self.u0 != self.u1 || reads_x || reads_ind {
                    return bad("a unified utility uses one function of the outcome alone");
                }
            }
            Scope::TreatmentSpecific => {
                if reads_x || reads_ind {
                    return bad("a treatment-specific utility depends on the outcome and arm only");
                }
            }
            Scope::FeatureDependent => {}
            Scope::Personalized => {
                if self.per_individual.is_none() {
                    return bad("a personalized utility needs a per-individual table");
                }
            }
        }
        Ok(())
    }

    pub fn individual(&self, i: usize) -> Result<Option<&Individual>> {
        match &self.per_individual {
            Some(t) => t.get(i).map(Some).ok_or(CcnError::MissingIndividual(i)),
            None if self.scope == Scope::Personalized => Err(CcnError::MissingIndividual(i)),
            None => Ok(None),
        }
    }

    /// Exact contrast `E[U1(Y(1))] - E[U0(Y(0))]` under the oracle laws.
    pub fn true_contrast(&self, oracle: &ScenarioOracle, x: &[f64], i: usize) -> Result<f64> {
        let ind = self.individual(i)?;
        let l1 = oracle.law(crate::data::Arm::Treated, x)?;
        let l0 = oracle.law(crate::data::Arm::Control, x)?;
        Ok(self.u1.expectation(&l1, x, ind) - self.u0.expectation(&l0, x, ind))
    }
}

/// Names of the ready-made utilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinUtility {
    /// `U = gamma` for both arms; the contrast is the CATE.
    Cate,
    /// `U0 = gamma`, `U1 = gamma - 4`.
    Linear,
    /// `U0 = 1{gamma > E[Y(0)|x]}`, `U1 = 1{gamma > E[Y(0)|x] + 4}`.
    Threshold,
    /// `U0 = 1{gamma > v_i}`, `U1 = 1{gamma > v_i + 1 - m_i}`, `v_i ~ U(0, 1.5)`.
    Personalized,
}

impl BuiltinUtility {
    pub const ALL: [BuiltinUtility; 4] =
        [BuiltinUtility::Cate, BuiltinUtility::Linear, BuiltinUtility::Threshold, BuiltinUtility::Personalized];

    /// Materializes the utility for the rows of `data`. Threshold utilities
    /// read `E[Y(0)|x]` from the oracle; personalized ones draw `v_i` from
    /// `seed` and read `m_i` from the oracle's indicator column (or use
    /// `m_i = 1` when the design has none).
    pub fn build(self, data: &Dataset<f64>, oracle: &ScenarioOracle, seed: u64) -> Result<UtilitySpec> {
        Ok(match self {
            BuiltinUtility::Cate => cate_utility(),
            BuiltinUtility::Linear => UtilitySpec {
                scope: Scope::TreatmentSpecific,
                u0: UtilityFn::Linear { slope: 1.0, intercept: 0.0 },
                u1: UtilityFn::Linear { slope: 1.0, intercept: -4.0 },
                per_individual: None,
            },
            BuiltinUtility::Threshold => {
                let mut table = Vec::with_capacity(data.n());
                for i in 0..data.n() {
                    let v = oracle.true_mean(crate::data::Arm::Control, data.row(i))?;
                    table.push(Individual { v, m: 1.0 });
                }
                UtilitySpec {
                    scope: Scope::FeatureDependent,
                    u0: UtilityFn::Threshold { base: 0.0, individual: true, m_gap: 0.0 },
                    u1: UtilityFn::Threshold { base: 4.0, individual: true, m_gap: 0.0 },
                    per_individual: Some(table),
                }
            }
            BuiltinUtility::Personalized => {
                let col = oracle.indicator_column();
                let mut rng = stream_rng(seed, Stream::Utility);
                let table = (0..data.n())
                    .map(|i| Individual { v: rng.random_range(0.0..1.5), m: col.map_or(1.0, |c| data.row(i)[c]) })
                    .collect();
                personalized_thresholds(table)
            }
        })
    }
}

pub fn cate_utility() -> UtilitySpec {
    let u = UtilityFn::Linear { slope: 1.0, intercept: 0.0 };
    UtilitySpec { scope: Scope::Unified, u0: u.clone(), u1: u, per_individual: None }
}

/// `U0 = 1{gamma > v_i}`, `U1 = 1{gamma > v_i + 1 - m_i}`.
pub fn personalized_thresholds(table: Vec<Individual>) -> UtilitySpec {
    UtilitySpec {
        scope: Scope::Personalized,
        u0: UtilityFn::Threshold { base: 0.0, individual: true, m_gap: 0.0 },
        u1: UtilityFn::Threshold { base: 0.0, individual: true, m_gap: 1.0 },
        per_individual: Some(table),
    }
}

/// The catalog of ready-made utilities.
pub fn builtin_utilities() -> &'static [BuiltinUtility] {
    &BuiltinUtility::ALL
}
