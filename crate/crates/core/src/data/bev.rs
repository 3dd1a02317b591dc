//! Lidar point clouds and their birds-eye-view rasters.
//!
//! BEV convention: the vehicle sits at pixel `(d/2, d/2)`; the forward axis
//! (`+x`) points up the image and the left axis (`+y`) points left, so a point
//! `(x, y)` lands at `row = d/2 − round(x/res)`, `col = d/2 − round(y/res)`.

use super::image::GrayImage;
use crate::error::{Error, Result};
use std::path::Path;

/// Ground sampling distance shared by lidar rasters and satellite imagery.
pub const RESOLUTION_M_PER_PX: f32 = 1.83;
/// Side length of BEV images and satellite tiles.
pub const BEV_SIZE: usize = 64;
/// Occupancy increment per point; pixels saturate at 255.
pub const COUNT_INTENSITY: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub reflectance: f32,
}

/// Vehicle-centred points in meters: `x` forward, `y` left, `z` up.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parses consecutive little-endian `f32` quadruples `(x, y, z, reflectance)`.
    pub fn from_kitti_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 16 != 0 {
            return Err(Error::Format(format!(
                "scan length {} is not a multiple of 16 bytes",
                bytes.len()
            )));
        }
        let points = bytes
            .chunks_exact(16)
            .map(|c| {
                let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap());
                Point {
                    x: f(0),
                    y: f(1),
                    z: f(2),
                    reflectance: f(3),
                }
            })
            .collect();
        Ok(PointCloud { points })
    }

    pub fn to_kitti_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 16);
        for p in &self.points {
            for v in [p.x, p.y, p.z, p.reflectance] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Reads a KITTI velodyne `.bin` scan.
pub fn load_kitti_scan(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PointCloud::from_kitti_bytes(&bytes)
}

/// Square single-channel lidar raster with the vehicle at the centre pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BevImage(GrayImage);

impl BevImage {
    pub fn new(size: usize) -> Self {
        BevImage(GrayImage::new(size, size))
    }

    pub fn from_gray(img: GrayImage) -> Result<Self> {
        if img.width() != img.height() {
            return Err(Error::Format(format!(
                "BEV image must be square, got {}×{}",
                img.width(),
                img.height()
            )));
        }
        Ok(BevImage(img))
    }

    pub fn size(&self) -> usize {
        self.0.width()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0.get(row, col)
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.0.set(row, col, v)
    }

    pub fn as_raw(&self) -> &[u8] {
        self.0.as_raw()
    }

    pub fn as_gray(&self) -> &GrayImage {
        &self.0
    }

    pub fn count_nonzero(&self) -> usize {
        self.as_raw().iter().filter(|&&v| v != 0).count()
    }
}

/// Occupancy raster of the above-ground (`z > 0`) points.
pub fn rasterize_bev(cloud: &PointCloud, resolution: f32, size: usize) -> BevImage {
    let half = (size / 2) as i64;
    let res = resolution as f64;
    let mut counts = vec![0u32; size * size];
    for p in &cloud.points {
        if !(p.z > 0.0) || !p.x.is_finite() || !p.y.is_finite() {
            continue;
        }
        let row = half - (p.x as f64 / res).round() as i64;
        let col = half - (p.y as f64 / res).round() as i64;
        if row < 0 || col < 0 || row >= size as i64 || col >= size as i64 {
            continue;
        }
        counts[row as usize * size + col as usize] += 1;
    }
    let data = counts
        .into_iter()
        .map(|c| c.saturating_mul(COUNT_INTENSITY).min(255) as u8)
        .collect();
    BevImage(GrayImage::from_raw(size, size, data).unwrap())
}

/// Exact `(cos, sin)` at quarter turns so those rotations are lossless.
pub(crate) fn cos_sin_deg(theta_deg: f64) -> (f64, f64) {
    let r = theta_deg.rem_euclid(360.0);
    if r == 0.0 {
        (1.0, 0.0)
    } else if r == 90.0 {
        (0.0, 1.0)
    } else if r == 180.0 {
        (-1.0, 0.0)
    } else if r == 270.0 {
        (0.0, -1.0)
    } else {
        let t = theta_deg.to_radians();
        (t.cos(), t.sin())
    }
}

/// Rotates image content counter-clockwise by `theta_deg` about the centre
/// pixel `(d/2, d/2)`, nearest-neighbour sampled, zero outside the source.
pub fn rotate_bev(img: &BevImage, theta_deg: f64) -> BevImage {
    let d = img.size();
    let c = (d / 2) as f64;
    let (cos, sin) = cos_sin_deg(theta_deg);
    let mut out = BevImage::new(d);
    for r in 0..d {
        let dy = c - r as f64;
        for col in 0..d {
            let dx = col as f64 - c;
            let sx = dx * cos + dy * sin;
            let sy = -dx * sin + dy * cos;
            let sc = (c + sx).round();
            let sr = (c - sy).round();
            if sr >= 0.0 && sc >= 0.0 && sr < d as f64 && sc < d as f64 {
                out.set(r, col, img.get(sr as usize, sc as usize));
            }
        }
    }
    out
}
