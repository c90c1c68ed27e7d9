use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodSpec};
use super::WORKERS_ENV;
use crate::ccn::{train_ccn, CdfModel, TrainConfig};
use crate::data::Dataset;
use crate::error::{CcnError, Result};
use crate::fccn::train_fccn;
use crate::metrics::{approx_ll, evaluate, MetricsReport, OracleModel};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scenarios::{generate, ScenarioOracle};

pub const REPLICATION_HEADER: [&str; 10] =
    ["method", "replication", "seed", "data_checksum", "status", "pehe", "ll", "oracle_ll", "auc", "error"];

pub const ABLATION_HEADER: [&str; 10] = [
    "variant",
    "completed",
    "failed",
    "pehe_mean",
    "pehe_se",
    "ll_mean",
    "ll_se",
    "auc_mean",
    "auc_se",
    "data_checksums",
];

/// The six ablation variants in table order.
pub const ABLATION_VARIANTS: [(&str, MethodSpec); 6] = {
    use super::config::Method::{Ccn, Fccn};
    const fn m(kind: super::config::Method, wass: bool, assign: bool, ps: bool) -> MethodSpec {
        MethodSpec { kind, wass, assign, ps }
    }
    [
        ("CCN", m(Ccn, false, false, false)),
        ("Wass", m(Fccn, true, false, false)),
        ("Assign", m(Fccn, false, true, false)),
        ("PS", m(Fccn, false, false, true)),
        ("Assign+PS", m(Fccn, false, true, true)),
        ("FCCN", m(Fccn, true, true, true)),
    ]
};

/// Mean and standard error over replications. `se` is absent for a single
/// value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = (n > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Stat { mean, se, n })
    }
}

/// Outcome of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    /// Checksum of the full generated dataset, before the split.
    pub data_checksum: Option<u64>,
    pub report: Option<MetricsReport>,
    /// LL of the true laws on the same test rows.
    pub oracle_ll: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: String,
    pub replications: usize,
    pub completed: usize,
    /// Some replication failed; the statistics cover the others.
    pub partial: bool,
    pub pehe: Option<Stat>,
    pub ll: Option<Stat>,
    pub auc: Option<Stat>,
    pub oracle_ll: Option<Stat>,
    pub failures: Vec<Failure>,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

impl AggregateReport {
    fn from_records(method: String, records: Vec<ReplicationRecord>) -> Self {
        let reports: Vec<&MetricsReport> = records.iter().filter_map(|r| r.report.as_ref()).collect();
        let pehe: Vec<f64> = reports.iter().map(|r| r.pehe).collect();
        let ll: Vec<f64> = reports.iter().map(|r| r.ll).collect();
        let auc: Vec<f64> = reports.iter().filter_map(|r| r.auc).collect();
        let oracle: Vec<f64> = records.iter().filter_map(|r| r.oracle_ll).collect();
        let failures: Vec<Failure> = records
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| Failure { replication: r.replication, error: e.clone() }))
            .collect();
        AggregateReport {
            method,
            replications: records.len(),
            completed: reports.len(),
            partial: !failures.is_empty(),
            pehe: Stat::of(&pehe),
            ll: Stat::of(&ll),
            auc: Stat::of(&auc),
            oracle_ll: Stat::of(&oracle),
            failures,
            records,
        }
    }
}

/// Random `test_fraction` share of the rows as test set. Both parts must
/// contain both arms.
fn split(data: &Dataset<f64>, test_fraction: f64, seed: u64) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let mut idx: Vec<usize> = (0..data.n()).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split));
    let n_test = ((data.n() as f64 * test_fraction).round() as usize).clamp(1, data.n().saturating_sub(1));
    let (test, train) = idx.split_at(n_test);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    let (train, test) = (data.subset(&train), data.subset(&test));
    train.require_both_arms()?;
    test.require_both_arms()?;
    Ok((train, test))
}

/// Everything replication `r` of an experiment trains and tests on.
#[derive(Clone, Debug)]
pub struct Replication {
    pub seed: u64,
    /// The full generated dataset, before the split.
    pub data: Dataset<f64>,
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub oracle: ScenarioOracle,
}

impl Replication {
    /// Regenerates replication `r` of `cfg`; identical for every method.
    pub fn new(cfg: &ExperimentConfig, r: usize) -> Result<Replication> {
        let seed = derive_seed(cfg.seed, r as u64);
        let mut scenario = cfg.scenario.config.clone();
        scenario.seed = derive_seed(seed, 0);
        let (data, oracle) = generate(cfg.scenario.name, &scenario)?;
        let (train, test) = split(&data, cfg.test_fraction, derive_seed(seed, 1))?;
        Ok(Replication { seed, data, train, test, oracle })
    }

    /// Training settings for this replication: `cfg.train` with its own
    /// seed.
    pub fn train_config(&self, cfg: &ExperimentConfig) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, 2), ..cfg.train.clone() }
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, 3)
    }
}

/// Fits `method` on the training rows of `rep`.
pub fn fit_method(cfg: &ExperimentConfig, method: &MethodSpec, rep: &Replication) -> Result<CdfModel<f64>> {
    let train_cfg = rep.train_config(cfg);
    match method.resolve(&cfg.fccn) {
        None => train_ccn(&rep.train, &train_cfg),
        Some(f) => train_fccn(&rep.train, &train_cfg, &f),
    }
}

fn run_one(cfg: &ExperimentConfig, method: &MethodSpec, replication: usize) -> ReplicationRecord {
    let mut record = ReplicationRecord {
        replication,
        seed: derive_seed(cfg.seed, replication as u64),
        data_checksum: None,
        report: None,
        oracle_ll: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let rep = Replication::new(cfg, replication)?;
        record.data_checksum = Some(rep.data.checksum());
        let model = fit_method(cfg, method, &rep)?;
        record.report = Some(evaluate(&model, &rep.test, &rep.oracle, &cfg.eval, rep.eval_seed())?);
        record.oracle_ll = Some(approx_ll(&OracleModel(&rep.oracle), &rep.test, cfg.eval.eps)?);
        Ok(())
    })();
    if let Err(e) = result {
        log::error!("{} replication {replication} failed: {e}", method.label());
        record.error = Some(e.to_string());
    }
    record
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize =
            v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
                CcnError::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))
            })?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CcnError::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Runs every replication of `method` and aggregates in replication order.
pub(crate) fn run_method(cfg: &ExperimentConfig, method: &MethodSpec) -> Result<AggregateReport> {
    cfg.validate()?;
    let records: Vec<ReplicationRecord> =
        pool()?.install(|| (0..cfg.replications).into_par_iter().map(|r| run_one(cfg, method, r)).collect());
    Ok(AggregateReport::from_records(method.label(), records))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_records(path: &Path, reports: &[&AggregateReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(REPLICATION_HEADER)?;
    for agg in reports {
        for r in &agg.records {
            let m = r.report.as_ref();
            w.write_record([
                agg.method.clone(),
                r.replication.to_string(),
                r.seed.to_string(),
                opt(r.data_checksum),
                if r.error.is_some() { "failed".into() } else { "ok".into() },
                opt(m.map(|m| m.pehe)),
                opt(m.map(|m| m.ll)),
                opt(r.oracle_ll),
                opt(m.and_then(|m| m.auc)),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs `cfg.method` over all replications and, when `cfg.output_dir` is
/// set, writes `replications.csv`, `aggregate.json` and optionally the
/// per-point files. Replication failures do not abort the run; they mark
/// the aggregate as partial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateReport> {
    let agg = run_method(cfg, &cfg.method)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        write_records(&dir.join("replications.csv"), &[&agg])?;
        std::fs::write(dir.join("aggregate.json"), serde_json::to_string_pretty(&agg)?)?;
        if cfg.write_points {
            for r in &agg.records {
                if let Some(m) = &r.report {
                    m.write_per_point_csv(BufWriter::new(File::create(
                        dir.join(format!("points_rep{}.csv", r.replication)),
                    )?))?;
                }
            }
        }
    }
    Ok(agg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: AggregateReport,
    /// Dataset checksum per replication; equal across rows by construction.
    pub data_checksums: Vec<Option<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn partial(&self) -> bool {
        self.rows.iter().any(|r| r.report.partial)
    }

    /// Every variant saw the same dataset in every replication.
    pub fn paired(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].data_checksums == w[1].data_checksums)
    }
}

/// Runs the six variants of [`ABLATION_VARIANTS`] with the same
/// replication seeds, so replication `r` of every variant trains and tests
/// on the same rows. `cfg.method` is ignored.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len());
    for (name, method) in ABLATION_VARIANTS {
        log::info!("ablation variant {name}");
        let mut report = run_method(cfg, &method)?;
        report.method = name.to_string();
        let data_checksums = report.records.iter().map(|r| r.data_checksum).collect();
        rows.push(AblationRow { variant: name.to_string(), report, data_checksums });
    }
    let table = AblationTable { rows };
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("ablation.csv"))?));
        w.write_record(ABLATION_HEADER)?;
        for row in &table.rows {
            let r = &row.report;
            let stat = |s: Option<Stat>| (opt(s.map(|s| s.mean)), opt(s.and_then(|s| s.se)));
            let (pm, ps) = stat(r.pehe);
            let (lm, ls) = stat(r.ll);
            let (am, as_) = stat(r.auc);
            let sums: Vec<String> = row.data_checksums.iter().map(|c| opt(*c)).collect();
            w.write_record([
                row.variant.clone(),
                r.completed.to_string(),
                r.failures.len().to_string(),
                pm,
                ps,
                lm,
                ls,
                am,
                as_,
                sums.join(";"),
            ])?;
        }
        w.flush()?;
        let reports: Vec<&AggregateReport> = table.rows.iter().map(|r| &r.report).collect();
        write_records(&dir.join("replications.csv"), &reports)?;
        std::fs::write(dir.join("ablation.json"), serde_json::to_string_pretty(&table)?)?;
    }
    Ok(table)
}
