//! Metrics and analysis runs: rollout error, correlation time, one-step errors, oracle
//! comparisons, noise probe, timescale sweep, loss landscape and timing.

mod bench;
mod landscape;
mod metrics;
mod oracle;
mod sweep;

pub use bench::{timing_bench, BenchRow};
pub use landscape::{filter_normalized_direction, loss_landscape, LandscapeGrid, LandscapeSpec};
pub use metrics::{
    correlation_time, error_curve, evaluate, next_step_errors, pearson, rollout_error, validation_rollout_loss,
    CorrelationTime, MetricsRecord, CORRELATION_THRESHOLD, DIVERGENCE_CEILING,
};
pub use oracle::{noise_probe, oracle_comparison, oracle_rollout, CurveSource, ErrorCurve, NoiseProbe};
pub use sweep::{regenerate_truth, timescale_sweep, SweepRow, SweepSpec, SWEEP_STEPS};
