use super::experiment::{evaluate_world, load_scorer, load_world, ExperimentSpec};
use crate::data::valid_centers;
use crate::error::{Error, Result};
use crate::inference::{exhaustive_pair_count, stage1_pair_count};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub mean_e_x: f64,
    pub mean_e_y: f64,
    pub mean_e_theta: f64,
    pub ms_per_waypoint: f64,
    pub stage1_pairs: usize,
    pub exhaustive_pairs: usize,
    pub mean_total_pairs: f64,
}

pub const TRADEOFF_HEADER: &str =
    "m,n,k,mean_e_x,mean_e_y,mean_e_theta,ms_per_waypoint,stage1_pairs,exhaustive_pairs,mean_total_pairs";

/// Runs the experiment once per `(m, n)`; every run sees the same waypoints
/// and heading noise.
pub fn bench_tradeoff(spec: &ExperimentSpec, m_values: &[usize], n_values: &[usize]) -> Result<Vec<TradeoffRow>> {
    let world = load_world(spec)?;
    let (scorer, floor) = load_scorer(spec)?;
    let d = world.meta.tile_size;
    let span_x = valid_centers(world.map.width(), d)?.count();
    let span_y = valid_centers(world.map.height(), d)?.count();
    let n_theta = crate::data::heading_candidates(0.0, spec.search.half_width_deg, spec.search.heading_step_deg)?.len();
    let mut rows = Vec::new();
    for &m in m_values {
        for &n in n_values {
            let mut search = spec.search.clone();
            search.m = m;
            search.n = n;
            if search.confidence_floor.is_none() {
                search.confidence_floor = floor;
            }
            let r = evaluate_world(&world, scorer.as_ref(), &search, spec.waypoints, spec.heading_noise_deg, spec.seed)?;
            rows.push(TradeoffRow {
                m,
                n,
                k: search.k,
                mean_e_x: r.metrics.mean_e_x,
                mean_e_y: r.metrics.mean_e_y,
                mean_e_theta: r.metrics.mean_e_theta,
                ms_per_waypoint: r.elapsed_ms / r.outcomes.len() as f64,
                stage1_pairs: stage1_pair_count(span_x, span_y, n_theta, m, n),
                exhaustive_pairs: exhaustive_pair_count(span_x, span_y, n_theta),
                mean_total_pairs: r.mean_total_pairs(),
            });
        }
    }
    if let Some(dir) = &spec.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("tradeoff.csv");
        std::fs::write(&path, tradeoff_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    let mut s = format!("{TRADEOFF_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.n,
            r.k,
            r.mean_e_x,
            r.mean_e_y,
            r.mean_e_theta,
            r.ms_per_waypoint,
            r.stage1_pairs,
            r.exhaustive_pairs,
            r.mean_total_pairs
        )
        .unwrap();
    }
    s
}
