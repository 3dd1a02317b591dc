use super::metrics::{angle_error, summarize, MetricsReport, PoseError};
use crate::error::{config_err, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Uniform-guess errors: closed-form expectations beside a Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub span_x: usize,
    pub span_y: usize,
    pub heading_bins: usize,
    pub trials: usize,
    /// `S/3` for a continuous span `S`.
    pub analytic_e_x: f64,
    pub analytic_e_y: f64,
    /// `(N² − 1) / (3N)` for `N` bins one degree apart.
    pub analytic_e_theta: f64,
    pub empirical: MetricsReport,
}

pub fn analytic_position_error(span: usize) -> f64 {
    span as f64 / 3.0
}

pub fn analytic_heading_error(bins: usize) -> f64 {
    let n = bins as f64;
    (n * n - 1.0) / (3.0 * n)
}

/// Guess and truth drawn independently: positions uniform over the
/// `D − d + 1` valid centres per axis, headings uniform over `bins`.
pub fn random_baseline<R: Rng + ?Sized>(
    map_width: usize,
    map_height: usize,
    tile_size: usize,
    heading_bins: usize,
    trials: usize,
    rng: &mut R,
) -> Result<RandomBaseline> {
    if trials == 0 || heading_bins == 0 {
        return Err(config_err!("random baseline needs trials ≥ 1 and at least one heading bin"));
    }
    if map_width < tile_size || map_height < tile_size {
        return Err(config_err!("map is smaller than the tile"));
    }
    let (sx, sy) = (map_width - tile_size + 1, map_height - tile_size + 1);
    let errors = (0..trials)
        .map(|_| {
            let ex = (rng.random_range(0.0..sx as f64) - rng.random_range(0.0..sx as f64)).abs();
            let ey = (rng.random_range(0.0..sy as f64) - rng.random_range(0.0..sy as f64)).abs();
            let a = rng.random_range(0..heading_bins) as f64;
            let b = rng.random_range(0..heading_bins) as f64;
            PoseError {
                e_x: ex,
                e_y: ey,
                e_theta: angle_error(a, b),
            }
        })
        .collect();
    Ok(RandomBaseline {
        span_x: sx,
        span_y: sy,
        heading_bins,
        trials,
        analytic_e_x: analytic_position_error(sx),
        analytic_e_y: analytic_position_error(sy),
        analytic_e_theta: analytic_heading_error(heading_bins),
        empirical: summarize(errors)?,
    })
}
