//! Seeded synthetic paired worlds: an RGB map of buildings, roads and
//! textured ground, plus per-waypoint lidar scans of the building walls.
//!
//! Building roofs carry a bright one-pixel parapet outline; the walls beneath
//! that outline are what the lidar sees (`z > 0`), so the aligned BEV raster
//! reproduces the outline pattern of the true tile. Roads and roofs are flat
//! and only ever produce ground returns.

use super::bev::{PointCloud, Point, BEV_SIZE, RESOLUTION_M_PER_PX};
use super::map::{Pose, SatMap};
use super::image::RgbImage;
use crate::error::{config_err, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Map side length `D` in pixels.
    pub size: usize,
    pub n_waypoints: usize,
    /// Tile / BEV side length `d`.
    pub tile_size: usize,
    pub resolution: f32,
    /// Building placement attempts per 10 000 map pixels.
    pub building_attempts_per_10k_px: f64,
    pub min_building_side: usize,
    pub max_building_side: usize,
    /// Lidar returns emitted per wall (outline) pixel.
    pub points_per_edge_pixel: usize,
    /// Ground returns (`z ≤ 0`) per scan.
    pub ground_points: usize,
    /// Spurious above-ground returns per scan that have no map counterpart.
    pub clutter_points: usize,
    /// Probability that a wall pixel is missed entirely.
    pub edge_dropout: f64,
    /// Width in pixels of the bright roof outline the walls sit under.
    pub wall_thickness: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 192,
            n_waypoints: 100,
            tile_size: BEV_SIZE,
            resolution: RESOLUTION_M_PER_PX,
            building_attempts_per_10k_px: 110.0,
            min_building_side: 6,
            max_building_side: 18,
            points_per_edge_pixel: 8,
            ground_points: 200,
            clutter_points: 0,
            edge_dropout: 0.0,
            wall_thickness: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldMeta {
    pub seed: u64,
    #[serde(rename = "D")]
    pub size: usize,
    pub resolution: f32,
    #[serde(default = "default_tile")]
    pub tile_size: usize,
}

fn default_tile() -> usize {
    BEV_SIZE
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waypoint {
    pub index: usize,
    pub pose: Pose,
    pub cloud: PointCloud,
}

/// A map prior with lidar scans taken at known poses on it.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub meta: WorldMeta,
    pub map: SatMap,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn overlaps(&self, o: &Rect, gap: usize) -> bool {
        self.x0 < o.x0 + o.w + gap
            && o.x0 < self.x0 + self.w + gap
            && self.y0 < o.y0 + o.h + gap
            && o.y0 < self.y0 + self.h + gap
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Deterministic world of side `size` with `n_waypoints` scans.
pub fn synth_world(seed: u64, size: usize, n_waypoints: usize) -> Result<World> {
    synth_world_with(
        seed,
        &SynthConfig {
            size,
            n_waypoints,
            ..SynthConfig::default()
        },
    )
}

pub fn synth_world_with(seed: u64, cfg: &SynthConfig) -> Result<World> {
    let d = cfg.tile_size;
    if cfg.size < 2 * d {
        return Err(config_err!(
            "synthetic map size {} must be at least twice the tile size {d}",
            cfg.size
        ));
    }
    if cfg.wall_thickness == 0
        || cfg.min_building_side < 2 * cfg.wall_thickness + 1
        || cfg.max_building_side < cfg.min_building_side
    {
        return Err(config_err!("building side range is invalid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (map, outline) = render_map(cfg, &mut rng);
    let centers = d / 2..=cfg.size - d / 2;
    let waypoints = (0..cfg.n_waypoints)
        .map(|index| {
            let pose = Pose {
                x: rng.random_range(centers.clone()) as f64,
                y: rng.random_range(centers.clone()) as f64,
                theta_deg: rng.random_range(0.0..360.0),
            };
            let cloud = scan(cfg, &outline, &pose, &mut rng);
            Waypoint { index, pose, cloud }
        })
        .collect();
    Ok(World {
        meta: WorldMeta {
            seed,
            size: cfg.size,
            resolution: cfg.resolution,
            tile_size: d,
        },
        map,
        waypoints,
    })
}

/// Renders the map; returns it with the list of parapet (outline) pixels.
fn render_map(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (SatMap, Vec<(usize, usize)>) {
    let n = cfg.size;
    let mut map = RgbImage::new(n, n);

    // ground: bilinear value noise on a 16 px lattice plus pixel grain
    let cell = 16;
    let g = n / cell + 2;
    let lattice: Vec<f64> = (0..g * g).map(|_| rng.random_range(0.0..1.0)).collect();
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let l = |a: usize, b: usize| lattice[b * g + a];
            let t = l(ix, iy) * (1.0 - tx) * (1.0 - ty)
                + l(ix + 1, iy) * tx * (1.0 - ty)
                + l(ix, iy + 1) * (1.0 - tx) * ty
                + l(ix + 1, iy + 1) * tx * ty;
            let grain = rng.random_range(-10.0..10.0);
            map.set(
                y,
                x,
                [
                    clamp_u8(60.0 + 45.0 * t + grain),
                    clamp_u8(82.0 + 40.0 * t + grain),
                    clamp_u8(45.0 + 25.0 * t + grain),
                ],
            );
        }
    }

    // roads: full-length strips in both directions
    let mut roads = Vec::new();
    let per_axis = n / 80 + 1;
    for axis in 0..2 {
        for _ in 0..per_axis {
            let width = rng.random_range(3..=6);
            let pos = rng.random_range(0..n - width);
            roads.push(if axis == 0 {
                Rect { x0: 0, y0: pos, w: n, h: width }
            } else {
                Rect { x0: pos, y0: 0, w: width, h: n }
            });
        }
    }
    for r in &roads {
        for y in r.y0..r.y0 + r.h {
            for x in r.x0..r.x0 + r.w {
                let v = 92.0 + rng.random_range(-6.0..6.0);
                map.set(y, x, [clamp_u8(v), clamp_u8(v), clamp_u8(v + 5.0)]);
            }
        }
    }

    // buildings
    let attempts = (cfg.building_attempts_per_10k_px * (n * n) as f64 / 10_000.0) as usize;
    let mut buildings: Vec<Rect> = Vec::new();
    for _ in 0..attempts {
        let w = rng.random_range(cfg.min_building_side..=cfg.max_building_side);
        let h = rng.random_range(cfg.min_building_side..=cfg.max_building_side);
        if w >= n || h >= n {
            continue;
        }
        let cand = Rect {
            x0: rng.random_range(0..n - w),
            y0: rng.random_range(0..n - h),
            w,
            h,
        };
        if buildings.iter().any(|b| b.overlaps(&cand, 3)) || roads.iter().any(|r| r.overlaps(&cand, 2)) {
            continue;
        }
        buildings.push(cand);
    }
    let mut outline = Vec::new();
    for b in &buildings {
        let base = [
            rng.random_range(95.0..165.0),
            rng.random_range(95.0..165.0),
            rng.random_range(95.0..165.0),
        ];
        for y in b.y0..b.y0 + b.h {
            for x in b.x0..b.x0 + b.w {
                let t = cfg.wall_thickness;
                let edge = y < b.y0 + t || x < b.x0 + t || y + t >= b.y0 + b.h || x + t >= b.x0 + b.w;
                if edge {
                    let v = rng.random_range(232.0..255.0);
                    map.set(y, x, [clamp_u8(v), clamp_u8(v), clamp_u8(v)]);
                    outline.push((x, y));
                } else {
                    let grain = rng.random_range(-5.0..5.0);
                    map.set(
                        y,
                        x,
                        [
                            clamp_u8(base[0] + grain),
                            clamp_u8(base[1] + grain),
                            clamp_u8(base[2] + grain),
                        ],
                    );
                }
            }
        }
    }
    (map, outline)
}

/// Lidar scan at `pose`: wall returns under every outline pixel in the
/// footprint, ground returns, and optional clutter.
fn scan(
    cfg: &SynthConfig,
    outline: &[(usize, usize)],
    pose: &Pose,
    rng: &mut ChaCha8Rng,
) -> PointCloud {
    let res = cfg.resolution as f64;
    let half = (cfg.tile_size / 2) as f64;
    let reach = half * std::f64::consts::SQRT_2 + 2.0;
    let t = pose.theta_deg.to_radians();
    let (s, c) = t.sin_cos();
    // vehicle axes expressed in map (east, north)
    let fwd = (-s, c);
    let left = (-c, -s);
    let mut points = Vec::new();
    let in_footprint = |xv: f64, yv: f64| (xv / res).round().abs() <= half && (yv / res).round().abs() <= half;

    for &(u, v) in outline {
        let east = u as f64 - pose.x;
        let north = pose.y - v as f64;
        if east.abs() > reach || north.abs() > reach {
            continue;
        }
        let xv = (east * fwd.0 + north * fwd.1) * res;
        let yv = (east * left.0 + north * left.1) * res;
        if !in_footprint(xv, yv) {
            continue;
        }
        if cfg.edge_dropout > 0.0 && rng.random_bool(cfg.edge_dropout) {
            continue;
        }
        for _ in 0..cfg.points_per_edge_pixel {
            points.push(Point {
                x: xv as f32,
                y: yv as f32,
                z: rng.random_range(0.5..15.0),
                reflectance: rng.random_range(0.0..1.0),
            });
        }
    }
    let span = half * res;
    for _ in 0..cfg.ground_points {
        points.push(Point {
            x: rng.random_range(-span..span) as f32,
            y: rng.random_range(-span..span) as f32,
            z: rng.random_range(-2.0..=0.0),
            reflectance: rng.random_range(0.0..1.0),
        });
    }
    for _ in 0..cfg.clutter_points {
        points.push(Point {
            x: rng.random_range(-span..span) as f32,
            y: rng.random_range(-span..span) as f32,
            z: rng.random_range(0.3..2.5),
            reflectance: rng.random_range(0.0..1.0),
        });
    }
    PointCloud { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::map::tile_fits;

    #[test]
    fn same_seed_same_world() {
        let a = synth_world(7, 160, 5).unwrap();
        let b = synth_world(7, 160, 5).unwrap();
        assert_eq!(a, b);
        let c = synth_world(8, 160, 5).unwrap();
        assert_ne!(a.map, c.map);
    }

    #[test]
    fn poses_keep_tiles_inside() {
        let w = synth_world(3, 192, 50).unwrap();
        for wp in &w.waypoints {
            assert!(tile_fits(&w.map, wp.pose.x as usize, wp.pose.y as usize, 64));
            assert!((0.0..360.0).contains(&wp.pose.theta_deg));
            assert!(!wp.cloud.is_empty());
        }
    }

    #[test]
    fn too_small_map_is_config_error() {
        assert!(matches!(
            synth_world(1, 100, 1),
            Err(crate::Error::Config(_))
        ));
    }
}
