//! Experiment harness: configs, seeded runs, CSV traces, aggregation and
//! hyperparameter sweeps.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod run;
pub mod selftest;
pub mod sweep;
pub mod trace;

pub use aggregate::{aggregate, aggregate_dir, mean_stderr, read_trace_dir, AggregatePoint, AggregateSummary};
pub use cli::run_cli;
pub use config::{AlgorithmKind, AlgorithmSpec, CheckpointSpec, ExperimentConfig, InstanceSpec};
pub use run::{
    execute, run_experiment, run_seed, simulate, ExperimentResult, Manifest, ManifestRun, RunOptions,
    RunOutcome, MANIFEST_FILE,
};
pub use selftest::selftest;
pub use sweep::{parse_grid_value, sweep, sweep_to_dir, GridValue, SweepMatrix};
pub use trace::{read_traces, Checkpoint, RegretTrace, CSV_HEADER};
