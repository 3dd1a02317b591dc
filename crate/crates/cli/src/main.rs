use clap::{Args, Parser, Subcommand};
use ecml_core::data::{load_dataset, load_kitti_scan, save_dataset, synth_world_with, RgbImage, SynthConfig, World};
use ecml_core::eval::{bench_tradeoff, random_baseline, run_experiment, tradeoff_csv, ExperimentSpec};
use ecml_core::inference::{localize, write_score_table, write_search_result, ScorerKind, SearchConfig};
use ecml_core::model::{EnergyModel, ModelConfig};
use ecml_core::training::{train, TrainConfig};
use ecml_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Lidar-to-satellite pose estimation with a learned energy model.
#[derive(Parser)]
#[command(name = "ecml", version)]
struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and write it as a dataset directory.
    Synth(SynthArgs),
    /// Train a model on a dataset (or a freshly synthesized world).
    Train(TrainArgs),
    /// Localize one scan.
    Localize(LocalizeArgs),
    /// Localize held-out waypoints and report pose errors.
    Eval(EvalArgs),
    /// Sweep the stage-1 strides and record error against time.
    Bench(BenchArgs),
    /// Errors of uniform random guessing.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct WorldArgs {
    /// Dataset directory; a world is synthesized from the seed when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic world settings (JSON).
    #[arg(long)]
    synth_config: Option<PathBuf>,
    /// Synthetic map side length.
    #[arg(long)]
    size: Option<usize>,
    /// Synthetic waypoint count.
    #[arg(long)]
    waypoints: Option<usize>,
}

impl WorldArgs {
    fn synth_config(&self) -> Result<SynthConfig> {
        let mut cfg: SynthConfig = read_json_or_default(self.synth_config.as_deref())?;
        if let Some(s) = self.size {
            cfg.size = s;
        }
        if let Some(n) = self.waypoints {
            cfg.n_waypoints = n;
        }
        Ok(cfg)
    }

    fn world(&self, seed: u64) -> Result<World> {
        match &self.data {
            Some(dir) => load_dataset(dir),
            None => synth_world_with(seed, &self.synth_config()?),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Training settings (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Backbone and architecture (JSON); the default CT otherwise.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f32>,
    /// Trailing waypoints kept out of training.
    #[arg(long)]
    holdout: Option<usize>,
    /// Heading offsets (degrees) used as rotation hard negatives.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rotation_negatives: Option<Vec<f64>>,
    /// Proximal negatives are drawn farther than this many pixels.
    #[arg(long)]
    proximal_min_radius: Option<f64>,
    /// Shift the positive pair by up to this many pixels per axis.
    #[arg(long)]
    positive_jitter_px: Option<usize>,
    /// Output directory for the checkpoint and training log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// Search settings (JSON); flags below override it.
    #[arg(long)]
    search_config: Option<PathBuf>,
    /// Pair scorer; `ct` and `cnn` need a checkpoint.
    #[arg(long)]
    scorer: Option<ScorerArg>,
    /// Model checkpoint; its sidecar JSON must sit next to it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Stage-1 pixel skip.
    #[arg(long)]
    m: Option<usize>,
    /// Stage-1 heading skip.
    #[arg(long)]
    n: Option<usize>,
    /// Stage-1 candidates refined at full resolution.
    #[arg(long)]
    k: Option<usize>,
    /// Half-width of the heading window around the prior, in degrees.
    #[arg(long)]
    half_width: Option<f64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ScorerArg {
    Ct,
    Cnn,
    Oracle,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Ct => ScorerKind::Ct,
            ScorerArg::Cnn => ScorerKind::Cnn,
            ScorerArg::Oracle => ScorerKind::Oracle,
        }
    }
}

impl SearchArgs {
    fn apply(&self, cfg: &mut SearchConfig) {
        if let Some(s) = self.scorer {
            cfg.scorer = s.into();
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(h) = self.half_width {
            cfg.half_width_deg = h;
        }
    }
}

#[derive(Args)]
struct LocalizeArgs {
    #[command(flatten)]
    search: SearchArgs,
    /// Dataset directory holding the map and the query scan.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Waypoint of the dataset to localize.
    #[arg(long)]
    waypoint: Option<usize>,
    /// KITTI-format scan (used with --map instead of --data).
    #[arg(long)]
    scan: Option<PathBuf>,
    /// Binary PPM map.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Heading prior in degrees; a dataset waypoint defaults to its true heading.
    #[arg(long, allow_hyphen_values = true)]
    heading: Option<f64>,
    /// Tile and BEV side length in pixels.
    #[arg(long, default_value_t = 64)]
    tile: usize,
    /// Write the search result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every scored candidate as CSV here.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment specification (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    world: WorldArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Number of trailing waypoints evaluated.
    #[arg(long)]
    eval_waypoints: Option<usize>,
    /// Heading prior noise half-range in degrees.
    #[arg(long)]
    noise: Option<f64>,
    /// Skip the per-waypoint search JSON files.
    #[arg(long)]
    no_searches: bool,
    /// Output directory for metrics.json, per_waypoint.csv and searches/.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl EvalArgs {
    fn spec(&self, seed: u64) -> Result<ExperimentSpec> {
        let mut spec: ExperimentSpec = read_json_or_default(self.config.as_deref())?;
        if let Some(p) = &self.world.data {
            spec.dataset = Some(p.clone());
        }
        if self.world.synth_config.is_some() || self.world.size.is_some() || self.world.waypoints.is_some() {
            spec.synth = self.world.synth_config()?;
        }
        spec.synth_seed = seed;
        spec.seed = seed;
        if let Some(c) = &self.search.checkpoint {
            spec.checkpoint = Some(c.clone());
        }
        if let Some(path) = &self.search.search_config {
            spec.search = read_json(path)?;
        }
        self.search.apply(&mut spec.search);
        if let Some(w) = self.eval_waypoints {
            spec.waypoints = w;
        }
        if let Some(n) = self.noise {
            spec.heading_noise_deg = n;
        }
        if self.no_searches {
            spec.write_searches = false;
        }
        if let Some(o) = &self.out {
            spec.output_dir = Some(o.clone());
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Stage-1 pixel skips to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    m_values: Vec<usize>,
    /// Stage-1 heading skips to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    n_values: Vec<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Map side length in pixels.
    #[arg(long, default_value_t = 192)]
    size: usize,
    #[arg(long, default_value_t = 64)]
    tile: usize,
    /// Number of one-degree heading bins.
    #[arg(long, default_value_t = 21)]
    headings: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map(read_json).unwrap_or_else(|| Ok(T::default()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run_synth(seed: u64, args: &SynthArgs) -> Result<()> {
    let world = synth_world_with(seed, &args.world.synth_config()?)?;
    save_dataset(&args.out, &world)?;
    print_json(&serde_json::json!({
        "dataset": args.out,
        "seed": seed,
        "size": world.meta.size,
        "waypoints": world.waypoints.len(),
    }))
}

fn run_train(seed: u64, args: &TrainArgs) -> Result<()> {
    let world = args.world.world(seed)?;
    let mut cfg: TrainConfig = read_json_or_default(args.config.as_deref())?;
    cfg.seed = seed;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    if let Some(h) = args.holdout {
        cfg.holdout = h;
    }
    if let Some(r) = &args.rotation_negatives {
        cfg.batch.rotation_negatives = r.clone();
    }
    if let Some(r) = args.proximal_min_radius {
        cfg.batch.proximal_min_radius = r;
    }
    if let Some(j) = args.positive_jitter_px {
        cfg.batch.positive_jitter_px = j;
    }
    let model_cfg: ModelConfig = match &args.model_config {
        Some(p) => read_json(p)?,
        None => ModelConfig::Ct(Default::default()),
    };
    let model = EnergyModel::new(model_cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let out = train(model, &world, &cfg, Some(&args.out), &mut |r| {
        let acc = r.top1_acc.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into());
        eprintln!("epoch {:>4}  loss {:.6}  top1 {acc}", r.epoch, r.mean_loss);
    })?;
    let last = out.epochs.last();
    print_json(&serde_json::json!({
        "checkpoint": ecml_core::training::final_checkpoint_path(&args.out),
        "epochs": out.epochs.len(),
        "final_loss": last.map(|r| r.mean_loss),
        "final_top1_acc": last.and_then(|r| r.top1_acc),
        "confidence_floor": out.model.confidence_floor,
    }))
}

fn run_localize(args: &LocalizeArgs) -> Result<()> {
    let mut cfg: SearchConfig = read_json_or_default(args.search.search_config.as_deref())?;
    args.search.apply(&mut cfg);
    if args.table.is_some() {
        cfg.keep_table = true;
    }
    let (cloud, map, prior, tile) = match (&args.data, args.waypoint, &args.scan, &args.map) {
        (Some(dir), Some(i), None, None) => {
            let world = load_dataset(dir)?;
            let wp = world
                .waypoints
                .get(i)
                .ok_or_else(|| Error::Config(format!("waypoint {i} not in dataset")))?;
            let prior = args.heading.unwrap_or(wp.pose.theta_deg);
            (wp.cloud.clone(), world.map, prior, world.meta.tile_size)
        }
        (None, None, Some(scan), Some(map)) => {
            let prior = args
                .heading
                .ok_or_else(|| Error::Config("--heading is required with --scan".into()))?;
            (load_kitti_scan(scan)?, RgbImage::load_ppm(map)?, prior, args.tile)
        }
        _ => {
            return Err(Error::Config(
                "give either --data with --waypoint, or --scan with --map".into(),
            ))
        }
    };
    let spec = ExperimentSpec {
        checkpoint: args.search.checkpoint.clone(),
        search: cfg.clone(),
        ..ExperimentSpec::default()
    };
    let (scorer, floor) = ecml_core::eval::load_scorer(&spec)?;
    if cfg.confidence_floor.is_none() {
        cfg.confidence_floor = floor;
    }
    let result = localize(&cloud, &map, prior, tile, scorer.as_ref(), &cfg)?;
    if let Some(p) = &args.out {
        write_search_result(p, &result)?;
    }
    if let Some(p) = &args.table {
        write_score_table(p, &result.table)?;
    }
    print_json(&result)
}

fn run_eval(seed: u64, args: &EvalArgs) -> Result<()> {
    let report = run_experiment(&args.spec(seed)?)?;
    let m = &report.metrics;
    print_json(&serde_json::json!({
        "count": m.count,
        "mean_e_x": m.mean_e_x,
        "mean_e_y": m.mean_e_y,
        "mean_e_theta": m.mean_e_theta,
        "std_e_x": m.std_e_x,
        "std_e_y": m.std_e_y,
        "std_e_theta": m.std_e_theta,
        "success": m.success,
        "ms_per_waypoint": report.elapsed_ms / m.count as f64,
    }))
}

fn run_bench(seed: u64, args: &BenchArgs) -> Result<()> {
    let rows = bench_tradeoff(&args.eval.spec(seed)?, &args.m_values, &args.n_values)?;
    print!("{}", tradeoff_csv(&rows));
    Ok(())
}

fn run_baseline(seed: u64, args: &BaselineArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = random_baseline(args.size, args.size, args.tile, args.headings, args.trials, &mut rng)?;
    b.empirical.per_waypoint.clear();
    let json = serde_json::to_string_pretty(&b)?;
    if let Some(p) = &args.out {
        write_file(p, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Contract(_) | Error::Bounds(_) => 2,
        Error::Io { .. } | Error::Format(_) | Error::Json(_) => 3,
        Error::Divergence(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Synth(a) => run_synth(seed, a),
        Command::Train(a) => run_train(seed, a),
        Command::Localize(a) => run_localize(a),
        Command::Eval(a) => run_eval(seed, a),
        Command::Bench(a) => run_bench(seed, a),
        Command::Baseline(a) => run_baseline(seed, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
