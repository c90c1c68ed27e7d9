//! `ccnlab`: generate scenario data, train and score CCN/FCCN models, and
//! run ablations and sweeps.
//!
//! Every subcommand reads a JSON config (`--config`), applies `key=value`
//! overrides given as trailing arguments or via `--set`, and writes its
//! outputs under `--out`. The worker count for replications comes from
//! `CCNLAB_WORKERS`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use ccn_core::ccn::{load_model, save_model, CdfModel};
use ccn_core::harness::{
    apply_override, emit_cdf_sketch, fit_method, run_ablation, run_experiment, run_sweep, ExperimentConfig,
    Replication, SweepSpec,
};
use ccn_core::metrics::{approx_ll, evaluate, OracleModel};
use ccn_core::scenarios::ScenarioOracle;
use ccn_core::Dataset;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "ccnlab", version, about = "Conditional potential-outcome distributions with CCN and FCCN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "ccnlab-out")]
    out: PathBuf,
    /// `key=value` override with a dotted key, e.g. `train.max_epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Further `key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write replication 0's dataset, potential outcomes and oracle.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the configured method on replication 0's training rows and save it.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run and score every replication, or score a saved model with `--model`.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model directory written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory written by `generate` to score `--model` on instead of
        /// replication 0's test rows.
        #[arg(long, requires = "model")]
        data: Option<PathBuf>,
    },
    /// Compare CCN, Wass, Assign, PS, Assign+PS and FCCN on paired seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one axis; the config holds `axis`, `values`, `methods` and `base`.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Estimated and true CDFs of a saved model on replication 0's test rows
    /// or on a generated dataset.
    Sketch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Directory written by `generate` to draw rows from.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Test-row indices, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        indices: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
}

/// Config tree with file contents, seed, output directory and overrides
/// merged. `prefix` is the path of the experiment config inside the tree.
fn config_tree(common: &Common, prefix: &str) -> Result<Value> {
    let mut tree = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Value::Object(Default::default()),
    };
    if let Some(seed) = common.seed {
        apply_override(&mut tree, &format!("{prefix}seed"), &seed.to_string())?;
    }
    let out = serde_json::to_string(&common.out)?;
    apply_override(&mut tree, &format!("{prefix}output_dir"), &out)?;
    for o in common.set.iter().chain(&common.overrides) {
        let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        apply_override(&mut tree, k.trim(), v.trim())?;
    }
    Ok(tree)
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_value(config_tree(common, "")?).context("invalid config")?;
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn generate(common: &Common) -> Result<ExitCode> {
    let cfg = experiment_config(common)?;
    let rep = Replication::new(&cfg, 0)?;
    std::fs::create_dir_all(&common.out)?;
    rep.data.write_csv(create(&common.out.join("dataset.csv"))?)?;
    rep.data.write_potential_csv(create(&common.out.join("potential.csv"))?)?;
    std::fs::write(common.out.join("oracle.json"), rep.oracle.to_json()?)?;
    println!("wrote {} rows to {}", rep.data.n(), common.out.display());
    Ok(ExitCode::SUCCESS)
}

fn train(common: &Common) -> Result<ExitCode> {
    let cfg = experiment_config(common)?;
    let rep = Replication::new(&cfg, 0)?;
    let model = fit_method(&cfg, &cfg.method, &rep)?;
    let dir = common.out.join("model");
    save_model(&model, &dir)?;
    write_json(&common.out.join("config.json"), &cfg)?;
    if let Some(r) = model.report() {
        if let Some(loss) = r.holdout_loss.get(r.best_epoch.wrapping_sub(1)) {
            println!("kept epoch {} of {} (holdout loss {loss:.5})", r.best_epoch, r.epochs);
        }
    }
    println!("saved {} model to {}", cfg.method.label(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn failed(what: &str, n: usize) -> ExitCode {
    if n == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{n} {what} failed");
        ExitCode::FAILURE
    }
}

/// A dataset and oracle written by `generate`, or replication 0's test
/// rows and oracle, plus the seed for Monte Carlo utilities.
fn scoring_data(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<(Dataset<f64>, ScenarioOracle, u64)> {
    let Some(dir) = dir else {
        let rep = Replication::new(cfg, 0)?;
        let seed = rep.eval_seed();
        return Ok((rep.test, rep.oracle, seed));
    };
    let open = |name: &str| File::open(dir.join(name)).with_context(|| format!("opening {}", dir.join(name).display()));
    let data = Dataset::read_csv(open("dataset.csv")?)?.read_potential_csv(open("potential.csv")?)?;
    let oracle = ScenarioOracle::from_json(&std::fs::read_to_string(dir.join("oracle.json"))?)?;
    Ok((data, oracle, cfg.seed))
}

fn eval(common: &Common, model: Option<&Path>, data: Option<&Path>) -> Result<ExitCode> {
    let cfg = experiment_config(common)?;
    let Some(model_dir) = model else {
        let agg = run_experiment(&cfg)?;
        if let Some(ll) = agg.ll {
            println!("{}: LL {:.4} over {} replications", agg.method, ll.mean, ll.n);
        }
        return Ok(failed("replication(s)", agg.failures.len()));
    };
    let model: CdfModel<f64> = load_model(model_dir)?;
    let (test, oracle, seed) = scoring_data(&cfg, data)?;
    let report = evaluate(&model, &test, &oracle, &cfg.eval, seed)?;
    std::fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("metrics.json"), &report)?;
    report.write_per_point_csv(create(&common.out.join("points.csv"))?)?;
    let oracle_ll = approx_ll(&OracleModel(&oracle), &test, cfg.eval.eps)?;
    println!("PEHE {:.4}  LL {:.4} (oracle {:.4})  AUC {:?}", report.pehe, report.ll, oracle_ll, report.auc);
    Ok(ExitCode::SUCCESS)
}

fn ablate(common: &Common) -> Result<ExitCode> {
    let cfg = experiment_config(common)?;
    let table = run_ablation(&cfg)?;
    if !table.paired() {
        bail!("ablation variants saw different datasets");
    }
    for row in &table.rows {
        let r = &row.report;
        let f = |s: Option<ccn_core::harness::Stat>| s.map_or("-".to_string(), |s| format!("{:.4}", s.mean));
        println!("{:<10} PEHE {}  LL {}  AUC {}", row.variant, f(r.pehe), f(r.ll), f(r.auc));
    }
    Ok(failed("replication(s)", table.rows.iter().map(|r| r.report.failures.len()).sum()))
}

fn sweep(common: &Common) -> Result<ExitCode> {
    let spec: SweepSpec = serde_json::from_value(config_tree(common, "base.")?).context("invalid sweep config")?;
    let rows = run_sweep(&spec)?;
    let mut failures = 0;
    for r in rows.iter().filter(|r| r.metric == "ll") {
        println!(
            "{}={} {:<8} LL {}",
            spec.axis.name(),
            r.value,
            r.method,
            r.stat.map_or("-".into(), |s| format!("{:.4}", s.mean))
        );
        if r.method != "oracle" {
            failures += r.failed;
        }
    }
    Ok(failed("replication(s)", failures))
}

fn sketch(common: &Common, model: &Path, data: Option<&Path>, indices: &[usize], grid: usize) -> Result<ExitCode> {
    let cfg = experiment_config(common)?;
    let model: CdfModel<f64> = load_model(model)?;
    let (rows, oracle, _) = scoring_data(&cfg, data)?;
    std::fs::create_dir_all(&common.out)?;
    let path = common.out.join("sketch.csv");
    emit_cdf_sketch(&model, &rows, Some(&oracle), indices, grid, create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common } => generate(common),
        Command::Train { common } => train(common),
        Command::Eval { common, model, data } => eval(common, model.as_deref(), data.as_deref()),
        Command::Ablate { common } => ablate(common),
        Command::Sweep { common } => sweep(common),
        Command::Sketch { common, model, data, indices, grid } => {
            sketch(common, model, data.as_deref(), indices, *grid)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
