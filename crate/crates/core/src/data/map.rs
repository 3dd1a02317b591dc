//! Satellite maps, tiles and the candidate grids searched over them.
//!
//! Map pixel coordinates are `(x, y)` = `(column, row)`. Tile coordinates name
//! the tile centre: the `d×d` tile at `(x, y)` spans columns
//! `x − d/2 .. x + d/2` and rows `y − d/2 .. y + d/2` (half-open).

use super::bev::cos_sin_deg;
use super::image::RgbImage;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Large RGB map prior.
pub type SatMap = RgbImage;
/// `d×d` RGB crop of a [`SatMap`].
pub type SatTile = RgbImage;

/// Vehicle pose on a map: pixel centre plus heading in degrees
/// (counter-clockwise, 0 = map up).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
}

/// Inclusive range of valid tile-centre coordinates along an axis of length
/// `extent`.
pub fn valid_centers(extent: usize, d: usize) -> Result<std::ops::RangeInclusive<usize>> {
    if extent < d {
        return Err(Error::Bounds(format!(
            "map extent {extent} smaller than tile size {d}"
        )));
    }
    Ok(d / 2..=extent - d / 2)
}

pub fn tile_fits(map: &SatMap, x: usize, y: usize, d: usize) -> bool {
    x >= d / 2 && y >= d / 2 && x + d / 2 <= map.width() && y + d / 2 <= map.height()
}

/// The `d×d` tile centred at `(x, y)`.
pub fn crop_tile(map: &SatMap, x: usize, y: usize, d: usize) -> Result<SatTile> {
    if !tile_fits(map, x, y, d) {
        return Err(Error::Bounds(format!(
            "tile {d}×{d} at ({x}, {y}) leaves the {}×{} map",
            map.width(),
            map.height()
        )));
    }
    let (x0, y0) = (x - d / 2, y - d / 2);
    let mut data = Vec::with_capacity(d * d * 3);
    for row in y0..y0 + d {
        let start = (row * map.width() + x0) * 3;
        data.extend_from_slice(&map.as_raw()[start..start + d * 3]);
    }
    Ok(RgbImage::from_raw(d, d, data).unwrap())
}

/// A `d×d` crop centred at `(x, y)` whose content is rotated
/// counter-clockwise by `theta_deg` (nearest-neighbour; zero outside the map).
pub fn crop_rotated(map: &SatMap, x: usize, y: usize, d: usize, theta_deg: f64) -> SatTile {
    let (cos, sin) = cos_sin_deg(theta_deg);
    let c = (d / 2) as f64;
    let mut out = RgbImage::new(d, d);
    for r in 0..d {
        let dy = c - r as f64;
        for col in 0..d {
            let dx = col as f64 - c;
            let sx = (x as f64 + dx * cos + dy * sin).round();
            let sy = (y as f64 - (-dx * sin + dy * cos)).round();
            if sx >= 0.0 && sy >= 0.0 && sx < map.width() as f64 && sy < map.height() as f64 {
                out.set(r, col, map.get(sy as usize, sx as usize));
            }
        }
    }
    out
}

/// Offsets `0, step, 2·step, …` below `count`, i.e. `ceil(count / step)`
/// values. Every index in `0..count` lies within `step − 1` of one of them.
pub fn strided_indices(count: usize, step: usize) -> Vec<usize> {
    (0..count).step_by(step.max(1)).collect()
}

/// Tile centres visited by a sliding window with stride `m` in both axes,
/// row-major (`y` outer). Yields `ceil(S/m)²` centres for `S = D − d + 1`.
pub fn enumerate_tiles(map: &SatMap, d: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    if m == 0 {
        return Err(Error::Config("tile stride must be at least 1".into()));
    }
    let xs = valid_centers(map.width(), d)?;
    let ys = valid_centers(map.height(), d)?;
    let xs: Vec<usize> = strided_indices(xs.end() - xs.start() + 1, m)
        .into_iter()
        .map(|o| o + xs.start())
        .collect();
    let mut out = Vec::new();
    for oy in strided_indices(ys.end() - ys.start() + 1, m) {
        for &x in &xs {
            out.push((x, oy + ys.start()));
        }
    }
    Ok(out)
}

/// Headings from `prior − half_width` to `prior + half_width` in `step`
/// increments, with the upper endpoint appended when the walk misses it.
pub fn heading_candidates(prior: f64, half_width: f64, step: f64) -> Result<Vec<f64>> {
    if !(half_width >= 0.0) || !(step >= 1.0) {
        return Err(Error::Config(format!(
            "heading window needs half_width ≥ 0 and step ≥ 1, got {half_width}, {step}"
        )));
    }
    let span = 2.0 * half_width;
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let off = k as f64 * step;
        if off > span + 1e-9 {
            break;
        }
        out.push(prior - half_width + off);
        k += 1;
    }
    let last = *out.last().unwrap();
    if (prior + half_width - last).abs() > 1e-9 {
        out.push(prior + half_width);
    }
    Ok(out)
}
