//! Experiment configuration, the training loop, learning-curve metrics and
//! output files.

mod config;
mod metrics;
mod output;
mod run;
mod sweep;

pub use config::{
    default_tau, AgentKind, AgentSettings, Budget, ExperimentConfig, MetricSettings, NserSettings, ReplaySettings, Strategy,
};
pub use metrics::{
    compute_auc, default_n_conv_delta, full_window_averages, mean_std, median, moving_average, n_conv, speedup_eta,
    steps_to_tau, Milestone,
};
pub use output::{
    read_summary, run_dir, write_metrics_csv, write_outputs, write_run, write_timing_csv, DISTRIBUTION_FILE, METRICS_FILE,
    METRICS_HEADER, PROPOSALS_FILE, RULES_FILE, SUMMARY_FILE, TIMING_FILE,
};
pub use run::{
    run_experiment, run_experiment_with, DistributionRecord, EvalPoint, MetricsRecord, RunOutput, RunResult,
    N_CONV_DEFINITION,
};
pub use sweep::{comparison_table, median_milestone, summarize, sweep, StrategySummary};
