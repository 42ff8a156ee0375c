//! Experiment configs, runs, verification suites and parameter sweeps.

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{
    parse_config, parse_config_in, parse_config_value, AdversarySpec, ArmsSpec, BetaSpec,
    ExperimentConfig, Mode, Problem,
};
pub use run::{
    curve_csv, execute, report_json, run_experiment, strip_wall_time, with_workers, Artifacts,
    BUILD,
};
pub use sweep::{loglog_slope, run_sweep, sweep_csv, SweepParam, SweepRow, SweepSpec};
pub use verify::{run_verify_suite, SuiteResult, VerifyReport};
