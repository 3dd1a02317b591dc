use super::bev::{rasterize_bev, rotate_bev, BevImage};
use super::map::{crop_rotated, crop_tile, valid_centers, SatTile};
use super::synth::World;
use crate::error::{config_err, Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Composition of the candidate set built around one waypoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    /// Tiles sampled within `proximal_radius` pixels of the truth.
    pub n_proximal: usize,
    /// Tiles sampled uniformly farther than `proximal_radius`.
    pub n_distant: usize,
    pub proximal_radius: f64,
    /// Proximal tiles are drawn strictly farther than this. Offsets inside it
    /// are never trained as negatives, which keeps the score peak as wide as
    /// a coarse search grid needs.
    pub proximal_min_radius: f64,
    /// The positive pair is shifted by up to this many pixels per axis from
    /// the true centre, uniformly. Teaches the model to score near misses of a
    /// coarse grid above unrelated tiles.
    pub positive_jitter_px: usize,
    /// Heading jitter of the positive pair, uniform in ± this many degrees.
    pub positive_jitter_deg: f64,
    /// Heading offsets (degrees) paired with the true tile as hard negatives.
    pub rotation_negatives: Vec<f64>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            n_proximal: 7,
            n_distant: 8,
            proximal_radius: 8.0,
            proximal_min_radius: 0.0,
            positive_jitter_px: 0,
            positive_jitter_deg: 0.0,
            rotation_negatives: Vec::new(),
        }
    }
}

impl BatchConfig {
    pub fn pairs_per_waypoint(&self) -> usize {
        1 + self.n_proximal + self.n_distant + self.rotation_negatives.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairCandidate {
    /// Tile centre on the map.
    pub center: (usize, usize),
    /// Lidar heading error relative to alignment, in degrees.
    pub rotation_offset_deg: f64,
    pub lidar: BevImage,
    pub tile: SatTile,
    /// Satellite content this pair asserts for the true tile: the tile
    /// itself, or for a misrotated lidar the true surroundings seen in the
    /// lidar's frame.
    pub target: SatTile,
}

/// One waypoint's lidar paired with `N_S` candidate tiles.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub candidates: Vec<PairCandidate>,
    pub true_index: usize,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn true_tile(&self) -> &SatTile {
        &self.candidates[self.true_index].tile
    }
}

/// Builds the candidate set for waypoint `waypoint` of `world`: the true
/// tile (index 0) with the aligned lidar, then proximal and distant tiles,
/// then rotation negatives.
pub fn make_training_batch<R: Rng + ?Sized>(
    world: &World,
    waypoint: usize,
    cfg: &BatchConfig,
    rng: &mut R,
) -> Result<PairBatch> {
    let wp = world
        .waypoints
        .get(waypoint)
        .ok_or_else(|| config_err!("waypoint {waypoint} out of range"))?;
    let d = world.meta.tile_size;
    let map = &world.map;
    let (tx, ty) = (wp.pose.x.round() as usize, wp.pose.y.round() as usize);
    let true_tile = crop_tile(map, tx, ty, d)?;
    let bev = rasterize_bev(&wp.cloud, world.meta.resolution, d);
    let aligned = rotate_bev(&bev, wp.pose.theta_deg);
    let xs = valid_centers(map.width(), d)?;
    let ys = valid_centers(map.height(), d)?;
    let r2 = cfg.proximal_radius * cfg.proximal_radius;
    let min2 = cfg.proximal_min_radius * cfg.proximal_min_radius;
    let dist2 = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - tx as f64, y as f64 - ty as f64);
        dx * dx + dy * dy
    };

    let spatial = |center: (usize, usize)| -> Result<PairCandidate> {
        let tile = crop_tile(map, center.0, center.1, d)?;
        Ok(PairCandidate {
            center,
            rotation_offset_deg: 0.0,
            lidar: aligned.clone(),
            target: tile.clone(),
            tile,
        })
    };
    let mut candidates = if cfg.positive_jitter_px == 0 && cfg.positive_jitter_deg == 0.0 {
        vec![spatial((tx, ty))?]
    } else {
        let j = cfg.positive_jitter_px as i64;
        let mut shift = |c: usize, range: &std::ops::RangeInclusive<usize>| {
            let v = c as i64 + rng.random_range(-j..=j);
            v.clamp(*range.start() as i64, *range.end() as i64) as usize
        };
        let center = (shift(tx, &xs), shift(ty, &ys));
        let w = cfg.positive_jitter_deg;
        let dt = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        let tile = crop_tile(map, center.0, center.1, d)?;
        vec![PairCandidate {
            center,
            rotation_offset_deg: dt,
            lidar: rotate_bev(&bev, wp.pose.theta_deg + dt),
            target: tile.clone(),
            tile,
        }]
    };

    let reach = cfg.proximal_radius.floor() as i64;
    let mut near = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let (x, y) = (tx as i64 + dx, ty as i64 + dy);
            if (dx, dy) == (0, 0) || x < *xs.start() as i64 || y < *ys.start() as i64 {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if x <= *xs.end() && y <= *ys.end() && dist2(x, y) <= r2 && dist2(x, y) > min2 {
                near.push((x, y));
            }
        }
    }
    if near.len() < cfg.n_proximal {
        return Err(config_err!(
            "only {} proximal positions available, {} requested",
            near.len(),
            cfg.n_proximal
        ));
    }
    let (picked, _) = near.partial_shuffle(rng, cfg.n_proximal);
    for &c in picked.iter() {
        candidates.push(spatial(c)?);
    }

    let far_total = (xs.end() - xs.start() + 1) * (ys.end() - ys.start() + 1);
    let near_total = near.len() + 1;
    if far_total - near_total.min(far_total) < cfg.n_distant {
        return Err(config_err!(
            "map too small for {} distant tiles",
            cfg.n_distant
        ));
    }
    let mut far: Vec<(usize, usize)> = Vec::with_capacity(cfg.n_distant);
    let mut tries = 0;
    while far.len() < cfg.n_distant {
        tries += 1;
        if tries > 100_000 {
            return Err(Error::Config("could not sample distinct distant tiles".into()));
        }
        let c = (rng.random_range(xs.clone()), rng.random_range(ys.clone()));
        if dist2(c.0, c.1) > r2 && !far.contains(&c) {
            far.push(c);
        }
    }
    for c in far {
        candidates.push(spatial(c)?);
    }

    for &delta in &cfg.rotation_negatives {
        candidates.push(PairCandidate {
            center: (tx, ty),
            rotation_offset_deg: delta,
            lidar: rotate_bev(&bev, wp.pose.theta_deg + delta),
            tile: true_tile.clone(),
            target: crop_rotated(map, tx, ty, d, -delta),
        });
    }
    Ok(PairBatch {
        candidates,
        true_index: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::synth_world;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_batch_is_the_true_pair() {
        let w = synth_world(1, 160, 3).unwrap();
        let cfg = BatchConfig {
            n_proximal: 0,
            n_distant: 0,
            ..Default::default()
        };
        let b = make_training_batch(&w, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.len(), 1);
        let p = &w.waypoints[0].pose;
        assert_eq!(b.candidates[0].center, (p.x as usize, p.y as usize));
        assert_eq!(b.true_index, 0);
    }

    #[test]
    fn composition_and_determinism() {
        let w = synth_world(2, 192, 4).unwrap();
        let cfg = BatchConfig {
            rotation_negatives: vec![-4.0, 4.0],
            ..Default::default()
        };
        let a = make_training_batch(&w, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = make_training_batch(&w, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 18);
        let (tx, ty) = a.candidates[0].center;
        let d = |c: (usize, usize)| {
            ((c.0 as f64 - tx as f64).powi(2) + (c.1 as f64 - ty as f64).powi(2)).sqrt()
        };
        for c in &a.candidates[1..8] {
            assert!(d(c.center) > 0.0 && d(c.center) <= 8.0);
        }
        for c in &a.candidates[8..16] {
            assert!(d(c.center) > 8.0);
        }
        for c in &a.candidates[16..] {
            assert_eq!(c.center, (tx, ty));
            assert_ne!(c.target, c.tile);
        }
        for c in &a.candidates {
            assert_eq!((c.tile.width(), c.lidar.size()), (64, 64));
        }
    }

    #[test]
    fn jittered_positive_and_proximal_gap() {
        let w = synth_world(3, 192, 6).unwrap();
        let cfg = BatchConfig {
            positive_jitter_px: 2,
            positive_jitter_deg: 1.0,
            proximal_min_radius: 4.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut moved = 0;
        for i in 0..6 {
            let p = &w.waypoints[i].pose;
            let (tx, ty) = (p.x.round() as i64, p.y.round() as i64);
            for _ in 0..10 {
                let b = make_training_batch(&w, i, &cfg, &mut rng).unwrap();
                let pos = &b.candidates[0];
                let (dx, dy) = (pos.center.0 as i64 - tx, pos.center.1 as i64 - ty);
                assert!(dx.abs() <= 2 && dy.abs() <= 2);
                assert!(pos.rotation_offset_deg.abs() <= 1.0);
                assert_eq!(pos.target, pos.tile);
                moved += usize::from((dx, dy) != (0, 0));
                for c in &b.candidates[1..8] {
                    let (ex, ey) = (c.center.0 as f64 - tx as f64, c.center.1 as f64 - ty as f64);
                    let r = (ex * ex + ey * ey).sqrt();
                    assert!(r > 4.0 && r <= 8.0, "proximal at {r}");
                }
            }
        }
        assert!(moved > 30);
    }

    #[test]
    fn impossible_counts_are_config_errors() {
        let w = synth_world(2, 128, 2).unwrap();
        let cfg = BatchConfig {
            n_proximal: 500,
            ..Default::default()
        };
        let r = make_training_batch(&w, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
