use super::loss::{ecml_loss_on_tape, tile_matrix, LossReport};
use crate::data::{crop_tile, make_training_batch, rasterize_bev, rotate_bev, BatchConfig, PairBatch, World};
use crate::error::{config_err, Error, Result};
use crate::model::{EnergyModel, ModelConfig, PairTensor};
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f32,
    /// Waypoints per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub batch: BatchConfig,
    /// Trailing waypoints of the world kept out of training and used for the
    /// per-epoch top-1 accuracy.
    pub holdout: usize,
    /// Write `epoch_NNNN.ckpt` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Stop once held-out accuracy has not improved for this many epochs.
    pub early_stop_patience: Option<usize>,
    /// Percentile of training true-pair scores stored as the model's
    /// confidence floor.
    pub floor_percentile: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            batch_size: 2,
            epochs: 50,
            seed: 0,
            batch: BatchConfig::default(),
            holdout: 100,
            checkpoint_every: 0,
            early_stop_patience: None,
            floor_percentile: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(config_err!("learning rate must be finite and non-negative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err!("epochs and batch_size must be at least 1"));
        }
        if !(0.0..=100.0).contains(&self.floor_percentile) {
            return Err(config_err!("floor_percentile must lie in [0, 100]"));
        }
        let b = &self.batch;
        if !(b.proximal_min_radius >= 0.0 && b.proximal_min_radius < b.proximal_radius) {
            return Err(config_err!("proximal_min_radius must lie in [0, proximal_radius)"));
        }
        if !(b.positive_jitter_deg >= 0.0 && b.positive_jitter_deg.is_finite()) {
            return Err(config_err!("positive_jitter_deg must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    /// Share of held-out candidate sets whose true pair scores highest.
    pub top1_acc: Option<f64>,
    /// Per-waypoint reports of the epoch's last step.
    pub last_step: Vec<LossReport>,
}

/// Model plus optimizer state; one [`Trainer::step`] per optimizer update.
pub struct Trainer {
    model: EnergyModel,
    adam: AdamState,
}

impl Trainer {
    pub fn new(model: EnergyModel, lr: f32) -> Self {
        let adam = AdamState::new(AdamConfig { lr, ..AdamConfig::default() }, model.params());
        Trainer { model, adam }
    }

    pub fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut EnergyModel {
        &mut self.model
    }

    pub fn into_model(self) -> EnergyModel {
        self.model
    }

    /// Averages the loss of each candidate set, backpropagates and updates.
    /// `rng` drives dropout when the model uses it.
    pub fn step(&mut self, batches: &[PairBatch], mut rng: Option<&mut dyn RngCore>) -> Result<Vec<LossReport>> {
        if batches.is_empty() {
            return Err(config_err!("training step without candidate sets"));
        }
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, true);
        let mut losses = Vec::with_capacity(batches.len());
        let mut betas = Vec::with_capacity(batches.len());
        for b in batches {
            if b.is_empty() {
                return Err(config_err!("empty candidate set"));
            }
            let mut scores = Vec::with_capacity(b.len());
            for c in &b.candidates {
                let pair = PairTensor::new(&c.lidar, &c.tile)?;
                let r = rng.as_mut().map(|r| &mut **r as &mut dyn RngCore);
                scores.push(self.model.forward(&mut tape, &bound, &pair, r)?);
            }
            let a = tape.stack(&scores)?;
            let targets: Vec<_> = b.candidates.iter().map(|c| &c.target).collect();
            let tiles = tile_matrix(&targets)?;
            let truth = tile_matrix(&[b.true_tile()])?;
            let len = truth.len();
            let (loss, beta) = ecml_loss_on_tape(&mut tape, a, &tiles, &truth.reshape(&[len])?)?;
            losses.push(loss);
            betas.push(beta);
        }
        let stacked = tape.stack(&losses)?;
        let total = tape.mean(stacked);
        let value = tape.value(total).item();
        if !value.is_finite() {
            return Err(Error::Divergence(format!("training loss is {value}")));
        }
        let grads = tape.backward(total)?;
        let grads: Vec<Tensor> = bound
            .vars()
            .iter()
            .zip(self.model.params())
            .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "gradient of {} is not finite",
                self.model.names()[i]
            )));
        }
        self.adam.step(self.model.params_mut(), &grads)?;
        self.model
            .check_finite()
            .map_err(|e| Error::Divergence(e.to_string()))?;
        Ok(losses
            .iter()
            .zip(&betas)
            .map(|(&l, &b)| LossReport::new(tape.value(l).item(), tape.value(b).data().to_vec()))
            .collect())
    }
}

/// Files written by [`train`] under its output directory.
pub fn train_log_path(dir: &Path) -> PathBuf {
    dir.join("train_log.csv")
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("model.ckpt")
}

pub struct TrainOutcome {
    pub model: EnergyModel,
    pub epochs: Vec<EpochReport>,
}

/// Nearest-rank percentile of `values` (sorted in place).
pub(crate) fn percentile(values: &mut [f32], pct: f64) -> Option<f32> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f32::total_cmp);
    let rank = ((pct / 100.0) * values.len() as f64).ceil() as usize;
    Some(values[rank.clamp(1, values.len()) - 1])
}

fn aligned_true_pair(world: &World, i: usize) -> Result<PairTensor> {
    let wp = &world.waypoints[i];
    let d = world.meta.tile_size;
    let bev = rasterize_bev(&wp.cloud, world.meta.resolution, d);
    let aligned = rotate_bev(&bev, wp.pose.theta_deg);
    let tile = crop_tile(&world.map, wp.pose.x.round() as usize, wp.pose.y.round() as usize, d)?;
    PairTensor::new(&aligned, &tile)
}

/// Scores every held-out set; returns the share ranked first.
fn top1(model: &EnergyModel, sets: &[(Vec<PairTensor>, usize)]) -> Result<Option<f64>> {
    if sets.is_empty() {
        return Ok(None);
    }
    let mut hits = 0;
    for (pairs, truth) in sets {
        let a = model.score_batch(pairs)?;
        if super::loss::argmax(&a) == *truth {
            hits += 1;
        }
    }
    Ok(Some(hits as f64 / sets.len() as f64))
}

/// Trains on every waypoint of `world` except the trailing `cfg.holdout`.
/// With `out_dir`, writes the step log, periodic checkpoints and the final
/// `model.ckpt`.
pub fn train(
    model: EnergyModel,
    world: &World,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = world.waypoints.len();
    if cfg.holdout >= n {
        return Err(config_err!(
            "world has {n} waypoints, none left after holding out {}",
            cfg.holdout
        ));
    }
    let train_idx: Vec<usize> = (0..n - cfg.holdout).collect();
    let dropout = matches!(model.config(), ModelConfig::Ct(c) if c.dropout > 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut held_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_4E1D);
    let held: Vec<(Vec<PairTensor>, usize)> = (n - cfg.holdout..n)
        .map(|i| {
            let b = make_training_batch(world, i, &cfg.batch, &mut held_rng)?;
            let pairs = b
                .candidates
                .iter()
                .map(|c| PairTensor::new(&c.lidar, &c.tile))
                .collect::<Result<Vec<_>>>()?;
            Ok((pairs, b.true_index))
        })
        .collect::<Result<_>>()?;

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = train_log_path(dir);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "epoch,step,loss,top1_acc").map_err(|e| Error::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };

    let mut trainer = Trainer::new(model, cfg.lr);
    let mut reports = Vec::new();
    let mut step = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let mut sum = 0.0f64;
        let mut count = 0usize;
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (ci, chunk) in chunks.iter().enumerate() {
            let batches = chunk
                .iter()
                .map(|&i| make_training_batch(world, i, &cfg.batch, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let r = if dropout { Some(&mut rng as &mut dyn RngCore) } else { None };
            let out = trainer.step(&batches, r).map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, step {}: {msg}", step + 1)),
                other => other,
            })?;
            step += 1;
            let loss = out.iter().map(|r| r.loss as f64).sum::<f64>() / out.len() as f64;
            sum += loss;
            count += 1;
            let acc = if ci + 1 == chunks.len() {
                top1(trainer.model(), &held)?
            } else {
                None
            };
            if let Some((w, path)) = log.as_mut() {
                let acc_s = acc.map(|a| format!("{a}")).unwrap_or_default();
                writeln!(w, "{epoch},{step},{loss},{acc_s}").map_err(|e| Error::io(path.as_path(), e))?;
            }
            if ci + 1 == chunks.len() {
                let report = EpochReport {
                    epoch,
                    steps: count,
                    mean_loss: sum / count as f64,
                    top1_acc: acc,
                    last_step: out,
                };
                on_epoch(&report);
                reports.push(report);
            }
        }
        if let Some((w, path)) = log.as_mut() {
            w.flush().map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let (Some(dir), true) = (out_dir, cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            trainer.model().save(&dir.join(format!("epoch_{epoch:04}.ckpt")))?;
        }
        if let (Some(patience), Some(acc)) = (cfg.early_stop_patience, reports.last().and_then(|r| r.top1_acc)) {
            if acc > best {
                best = acc;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }

    let mut model = trainer.into_model();
    let pairs = train_idx
        .iter()
        .map(|&i| aligned_true_pair(world, i))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = model.score_batch(&pairs)?;
    model.confidence_floor = percentile(&mut scores, cfg.floor_percentile);
    if let Some(dir) = out_dir {
        model.save(&final_checkpoint_path(dir))?;
    }
    Ok(TrainOutcome { model, epochs: reports })
}
