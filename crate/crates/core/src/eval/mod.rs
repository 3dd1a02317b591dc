//! Pose metrics, the random baseline and experiment orchestration.

mod baseline;
mod experiment;
mod metrics;
mod tradeoff;

pub use baseline::{analytic_heading_error, analytic_position_error, random_baseline, RandomBaseline};
pub use experiment::{
    evaluate_world, load_scorer, load_world, per_waypoint_csv, run_experiment, write_report, ExperimentReport,
    ExperimentSpec, WaypointOutcome, PER_WAYPOINT_HEADER,
};
pub use metrics::{angle_error, eval_metrics, mean_std, pose_error, summarize, MetricsReport, PoseError, SuccessRates};
pub use tradeoff::{bench_tradeoff, tradeoff_csv, TradeoffRow, TRADEOFF_HEADER};
