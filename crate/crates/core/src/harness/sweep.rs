use std::fs::File;
use std::io::BufWriter;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodSpec};
use super::experiment::{run_method, Stat};
use crate::error::{CcnError, Result};

pub const SWEEP_HEADER: [&str; 9] = ["axis", "value", "method", "metric", "mean", "se", "n", "completed", "failed"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SampleSize,
    Alpha,
    Beta,
    NoiseDims,
    PropensityScale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SampleSize => "sample_size",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
            SweepAxis::NoiseDims => "noise_dims",
            SweepAxis::PropensityScale => "propensity_scale",
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CcnError::InvalidConfig(format!("{} needs whole numbers, got {v}", self.name())))
            }
        };
        match self {
            SweepAxis::SampleSize => cfg.scenario.config.n = count(value)?,
            SweepAxis::Alpha => cfg.fccn.alpha = value,
            SweepAxis::Beta => cfg.fccn.beta = value,
            SweepAxis::NoiseDims => cfg.scenario.config.noise_dims = count(value)?,
            SweepAxis::PropensityScale => cfg.scenario.config.propensity_scale = value,
        }
        cfg.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub base: ExperimentConfig,
}

fn default_methods() -> Vec<MethodSpec> {
    vec![MethodSpec::ccn(), MethodSpec::fccn()]
}

/// One point of one curve. The oracle curve has `method == "oracle"` and
/// only the `ll` metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub method: String,
    pub metric: String,
    pub stat: Option<Stat>,
    pub completed: usize,
    pub failed: usize,
}

/// Runs `spec.base` at every axis value for every method. The master seed
/// is shared across values and methods, so curves are paired. Writes
/// `sweep.csv` when the base config has an output directory.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(CcnError::InvalidConfig("sweep needs at least one value".into()));
    }
    if spec.methods.is_empty() {
        return Err(CcnError::InvalidConfig("sweep needs at least one method".into()));
    }
    let mut rows = Vec::new();
    for &value in &spec.values {
        let mut cfg = spec.base.clone();
        spec.axis.apply(&mut cfg, value)?;
        let mut oracle = None;
        for method in &spec.methods {
            log::info!("sweep {}={value} {}", spec.axis.name(), method.label());
            let agg = run_method(&cfg, method)?;
            let failed = agg.failures.len();
            for (metric, stat) in [("ll", agg.ll), ("pehe", agg.pehe), ("auc", agg.auc)] {
                rows.push(SweepRow {
                    axis: spec.axis,
                    value,
                    method: agg.method.clone(),
                    metric: metric.into(),
                    stat,
                    completed: agg.completed,
                    failed,
                });
            }
            // The oracle LL depends only on the test rows, which every
            // method shares; take it from the first method that has it.
            if oracle.is_none() && agg.oracle_ll.is_some() {
                oracle = Some((agg.oracle_ll, agg.completed, failed));
            }
        }
        if let Some((stat, completed, failed)) = oracle {
            rows.push(SweepRow {
                axis: spec.axis,
                value,
                method: "oracle".into(),
                metric: "ll".into(),
                stat,
                completed,
                failed,
            });
        }
    }
    if let Some(dir) = &spec.base.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("sweep.csv"))?));
        w.write_record(SWEEP_HEADER)?;
        for r in &rows {
            let s = r.stat;
            w.write_record([
                spec.axis.name().to_string(),
                r.value.to_string(),
                r.method.clone(),
                r.metric.clone(),
                s.map(|s| s.mean.to_string()).unwrap_or_default(),
                s.and_then(|s| s.se).map(|v| v.to_string()).unwrap_or_default(),
                s.map(|s| s.n.to_string()).unwrap_or_default(),
                r.completed.to_string(),
                r.failed.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values_land_in_the_config() {
        let mut cfg = ExperimentConfig::default();
        SweepAxis::SampleSize.apply(&mut cfg, 4000.0).unwrap();
        SweepAxis::Alpha.apply(&mut cfg, 5e-4).unwrap();
        SweepAxis::NoiseDims.apply(&mut cfg, 10.0).unwrap();
        assert_eq!(cfg.scenario.config.n, 4000);
        assert_eq!(cfg.fccn.alpha, 5e-4);
        assert_eq!(cfg.scenario.config.noise_dims, 10);
        assert!(SweepAxis::NoiseDims.apply(&mut cfg, 2.5).is_err());
        assert!(SweepAxis::PropensityScale.apply(&mut cfg, -1.0).is_err());
    }

    #[test]
    fn empty_sweeps_are_rejected() {
        let spec = SweepSpec {
            axis: SweepAxis::Alpha,
            values: vec![],
            methods: default_methods(),
            base: ExperimentConfig::default(),
        };
        assert!(run_sweep(&spec).is_err());
    }
}
