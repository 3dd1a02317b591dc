use crate::data::Pose;
use crate::error::{contract_err, Result};
use serde::{Deserialize, Serialize};

/// Absolute pose errors of one waypoint: pixels for `x`/`y`, degrees for `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
}

/// Shares of waypoints within each error threshold. The pixel thresholds
/// apply to `max(e_x, e_y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRates {
    pub xy_within_3px: f64,
    pub xy_within_5px: f64,
    pub theta_within_2deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub mean_e_x: f64,
    pub mean_e_y: f64,
    pub mean_e_theta: f64,
    /// Population standard deviations.
    pub std_e_x: f64,
    pub std_e_y: f64,
    pub std_e_theta: f64,
    pub success: SuccessRates,
    pub per_waypoint: Vec<PoseError>,
}

/// `|a − b|` in degrees, wrapped into `[0, 180]`.
pub fn angle_error(a: f64, b: f64) -> f64 {
    ((a - b + 180.0).rem_euclid(360.0) - 180.0).abs()
}

pub fn pose_error(predicted: &Pose, truth: &Pose) -> PoseError {
    PoseError {
        e_x: (predicted.x - truth.x).abs(),
        e_y: (predicted.y - truth.y).abs(),
        e_theta: angle_error(predicted.theta_deg, truth.theta_deg),
    }
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summary statistics over already computed per-waypoint errors.
pub fn summarize(errors: Vec<PoseError>) -> Result<MetricsReport> {
    if errors.is_empty() {
        return Err(contract_err!("metrics need at least one waypoint"));
    }
    let col = |f: fn(&PoseError) -> f64| errors.iter().map(f).collect::<Vec<_>>();
    let (mean_e_x, std_e_x) = mean_std(&col(|e| e.e_x));
    let (mean_e_y, std_e_y) = mean_std(&col(|e| e.e_y));
    let (mean_e_theta, std_e_theta) = mean_std(&col(|e| e.e_theta));
    let n = errors.len() as f64;
    let share = |ok: &dyn Fn(&PoseError) -> bool| errors.iter().filter(|e| ok(e)).count() as f64 / n;
    let success = SuccessRates {
        xy_within_3px: share(&|e| e.e_x.max(e.e_y) <= 3.0),
        xy_within_5px: share(&|e| e.e_x.max(e.e_y) <= 5.0),
        theta_within_2deg: share(&|e| e.e_theta <= 2.0),
    };
    Ok(MetricsReport {
        count: errors.len(),
        mean_e_x,
        mean_e_y,
        mean_e_theta,
        std_e_x,
        std_e_y,
        std_e_theta,
        success,
        per_waypoint: errors,
    })
}

pub fn eval_metrics(predicted: &[Pose], truth: &[Pose]) -> Result<MetricsReport> {
    if predicted.len() != truth.len() {
        return Err(contract_err!(
            "{} predictions for {} ground-truth poses",
            predicted.len(),
            truth.len()
        ));
    }
    summarize(predicted.iter().zip(truth).map(|(p, t)| pose_error(p, t)).collect())
}
