use super::metrics::{pose_error, summarize, MetricsReport};
use crate::data::{load_dataset, synth_world_with, Pose, SynthConfig, World};
use crate::error::{config_err, Error, Result};
use crate::inference::{localize, write_search_result, PixelL1Oracle, Scorer, ScorerKind, SearchConfig, SearchResult};
use crate::model::{EnergyModel, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Dataset directory; when absent the world is synthesized.
    pub dataset: Option<PathBuf>,
    pub synth_seed: u64,
    pub synth: SynthConfig,
    /// Required for the learned scorers.
    pub checkpoint: Option<PathBuf>,
    pub search: SearchConfig,
    /// The trailing `waypoints` waypoints of the world are evaluated.
    pub waypoints: usize,
    /// Heading priors are the truth plus uniform noise in `±heading_noise_deg`.
    pub heading_noise_deg: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Also write one search-result JSON per waypoint.
    pub write_searches: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            dataset: None,
            synth_seed: 0,
            synth: SynthConfig::default(),
            checkpoint: None,
            search: SearchConfig::default(),
            waypoints: 100,
            heading_noise_deg: 10.0,
            seed: 0,
            output_dir: None,
            write_searches: true,
        }
    }
}

/// One evaluated waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointOutcome {
    pub index: usize,
    pub truth: Pose,
    pub prior_deg: f64,
    pub result: SearchResult,
}

pub struct ExperimentReport {
    pub metrics: MetricsReport,
    pub outcomes: Vec<WaypointOutcome>,
    /// Wall time of all searches, in milliseconds.
    pub elapsed_ms: f64,
}

impl ExperimentReport {
    pub fn mean_total_pairs(&self) -> f64 {
        let n = self.outcomes.len() as f64;
        self.outcomes.iter().map(|o| o.result.stats.total_pairs() as f64).sum::<f64>() / n
    }
}

pub fn load_world(spec: &ExperimentSpec) -> Result<World> {
    match &spec.dataset {
        Some(dir) => load_dataset(dir),
        None => synth_world_with(spec.synth_seed, &spec.synth),
    }
}

/// The scorer named by `search.scorer`, loading the checkpoint if needed.
/// Returns the scorer and the confidence floor stored with the model.
pub fn load_scorer(spec: &ExperimentSpec) -> Result<(Box<dyn Scorer>, Option<f32>)> {
    let kind = spec.search.scorer;
    if kind == ScorerKind::Oracle {
        return Ok((Box::new(PixelL1Oracle), None));
    }
    let path = spec
        .checkpoint
        .as_ref()
        .ok_or_else(|| config_err!("scorer {kind:?} needs a checkpoint"))?;
    let model = EnergyModel::load(path)?;
    let matches = matches!(
        (kind, model.config()),
        (ScorerKind::Ct, ModelConfig::Ct(_)) | (ScorerKind::Cnn, ModelConfig::Cnn(_))
    );
    if !matches {
        return Err(config_err!(
            "checkpoint {} does not hold a {kind:?} model",
            path.display()
        ));
    }
    let floor = model.confidence_floor;
    Ok((Box::new(model), floor))
}

/// Localizes the evaluated waypoints of `world` with `scorer`.
pub fn evaluate_world(
    world: &World,
    scorer: &dyn Scorer,
    search: &SearchConfig,
    waypoints: usize,
    heading_noise_deg: f64,
    seed: u64,
) -> Result<ExperimentReport> {
    search.validate()?;
    let n = world.waypoints.len();
    if waypoints == 0 || waypoints > n {
        return Err(config_err!("cannot evaluate {waypoints} of {n} waypoints"));
    }
    if !(heading_noise_deg >= 0.0) {
        return Err(config_err!("heading noise must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(waypoints);
    for wp in &world.waypoints[n - waypoints..] {
        let noise = if heading_noise_deg > 0.0 {
            rng.random_range(-heading_noise_deg..=heading_noise_deg)
        } else {
            0.0
        };
        let prior = wp.pose.theta_deg + noise;
        let result = localize(&wp.cloud, &world.map, prior, world.meta.tile_size, scorer, search)?;
        outcomes.push(WaypointOutcome {
            index: wp.index,
            truth: wp.pose,
            prior_deg: prior,
            result,
        });
    }
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let metrics = summarize(outcomes.iter().map(|o| pose_error(&o.result.pose, &o.truth)).collect())?;
    Ok(ExperimentReport {
        metrics,
        outcomes,
        elapsed_ms,
    })
}

pub const PER_WAYPOINT_HEADER: &str =
    "index,x_true,y_true,theta_true,theta_prior,x_pred,y_pred,theta_pred,e_x,e_y,e_theta,alpha,low_confidence";

pub fn per_waypoint_csv(report: &ExperimentReport) -> String {
    let mut s = format!("{PER_WAYPOINT_HEADER}\n");
    for (o, e) in report.outcomes.iter().zip(&report.metrics.per_waypoint) {
        let p = &o.result.pose;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            o.index,
            o.truth.x,
            o.truth.y,
            o.truth.theta_deg,
            o.prior_deg,
            p.x,
            p.y,
            p.theta_deg,
            e.e_x,
            e.e_y,
            e.e_theta,
            o.result.score,
            o.result.low_confidence
        )
        .unwrap();
    }
    s
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `metrics.json`, `per_waypoint.csv` and optionally `searches/NNNN.json`.
pub fn write_report(dir: &Path, report: &ExperimentReport, searches: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("metrics.json"), serde_json::to_string_pretty(&report.metrics)?)?;
    write(&dir.join("per_waypoint.csv"), per_waypoint_csv(report))?;
    if searches {
        let sub = dir.join("searches");
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for o in &report.outcomes {
            write_search_result(&sub.join(format!("{:04}.json", o.index)), &o.result)?;
        }
    }
    Ok(())
}

/// Loads the world and scorer, localizes every evaluated waypoint and writes
/// the artifacts when an output directory is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let world = load_world(spec)?;
    let (scorer, floor) = load_scorer(spec)?;
    let mut search = spec.search.clone();
    if search.confidence_floor.is_none() {
        search.confidence_floor = floor;
    }
    let report = evaluate_world(&world, scorer.as_ref(), &search, spec.waypoints, spec.heading_noise_deg, spec.seed)?;
    if let Some(dir) = &spec.output_dir {
        write_report(dir, &report, spec.write_searches)?;
    }
    Ok(report)
}
