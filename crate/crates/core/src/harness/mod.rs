//! Replicated experiments over the synthetic scenarios.
//!
//! An [`ExperimentConfig`] names a scenario, a method and its training
//! settings. [`run_experiment`] draws one dataset per replication, splits
//! it into train and test rows, fits the method on the train rows and
//! scores it on the test rows against the scenario oracle. Replication `r`
//! uses `derive_seed(seed, r)`, so adding replications leaves earlier ones
//! untouched and every method sees the same data for the same `r`.
//!
//! Replications run on a rayon pool whose size comes from the
//! [`WORKERS_ENV`] variable (all cores when unset).
//!
//! Output files, all under the configured output directory:
//!
//! | file | header |
//! |---|---|
//! | `replications.csv` | [`REPLICATION_HEADER`] |
//! | `aggregate.json` | [`AggregateReport`] |
//! | `points_rep{r}.csv` | [`crate::metrics::PER_POINT_HEADER`] |
//! | `ablation.csv` | [`ABLATION_HEADER`] |
//! | `sweep.csv` | [`SWEEP_HEADER`] |
//! | sketch files | [`SKETCH_HEADER`] |

mod config;
mod experiment;
mod sketch;
mod sweep;

pub use config::{apply_override, ExperimentConfig, Method, MethodSpec, ScenarioSpec};
pub use experiment::{
    fit_method, run_ablation, run_experiment, AblationRow, AblationTable, AggregateReport, Failure, Replication,
    ReplicationRecord, Stat, ABLATION_HEADER, ABLATION_VARIANTS, REPLICATION_HEADER,
};
pub use sketch::{emit_cdf_sketch, SKETCH_HEADER};
pub use sweep::{run_sweep, SweepAxis, SweepRow, SweepSpec, SWEEP_HEADER};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "CCNLAB_WORKERS";
