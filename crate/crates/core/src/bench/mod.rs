//! Condition-number sweep harness: configuration, deterministic seeding,
//! exhaustive threshold search, paired trials and CSV output.

mod config;
mod sweep;

pub use config::{uniform_grid, ConfigError, SweepConfig, FULL_SCALE_TRIALS};
pub use sweep::{
    aggregate, aggregate_csv, derive_seed, draw_instance, emit_plot_data, parse_trials_csv, run_sweep,
    select_threshold, summary_text, sweep_taps, threshold_search, trials_csv, write_outputs, BenchError,
    GridPoint, Instance, SweepResult, ThresholdChoice, TrialRecord, TrialReport, AGGREGATE_HEADER, PLOT_HEADER,
    TRIALS_HEADER,
};
