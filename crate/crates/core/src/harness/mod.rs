//! Experiment driver: seeded single-task and transfer runs, smoothed
//! learning curves, option traces, the option-count ablation and the exact
//! property suites.

pub mod ablation;
pub mod config;
pub mod run;
pub mod trace;
pub mod verify;

pub use ablation::{ablation_n_options, AblationRow, DEFAULT_OPTION_COUNTS};
pub use config::ExperimentConfig;
pub use run::{
    aggregate, mean_and_stderr, run_experiment, run_seed, seed_csv_path, AggregateRow, EpisodeRow,
    ExperimentSummary, SeedRun, SlidingMean, SMOOTHING_WINDOW,
};
pub use trace::{occupancy, option_trace_export, options_per_episode, OccupancyRow, TraceRow};
pub use verify::{format_table, verify_all, SuiteCheck, VerifyScale};
