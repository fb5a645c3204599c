//! Configuration-driven experiments.

mod config;
mod diagnostics;
mod run;

pub use config::{
    load_config, validate_config, BlrData, EstimatorKind, GfsfReg, InitSpec, RunConfig, TargetSpec,
};
pub use diagnostics::{gaussian_w2_proxy, mean_nn_distance, mode_balance, moments, W2Proxy};
pub use run::{
    run_experiment, snapshot_file_name, Experiment, MetricRecord, RunOutput, RunStatus,
    METRICS_FILE, RESOLVED_CONFIG_FILE, SUMMARY_FILE,
};
