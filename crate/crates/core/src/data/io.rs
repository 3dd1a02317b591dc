//! Dataset directories.
//!
//! ```text
//! <dir>/world.json         {"seed": u64, "D": usize, "resolution": f32, "tile_size": usize}
//! <dir>/map.ppm            binary P6 satellite map
//! <dir>/poses.csv          index,x_px,y_px,theta_deg
//! <dir>/clouds/NNNN.bin    KITTI-style little-endian f32 (x, y, z, reflectance)
//! <dir>/bev/NNNN.pgm       binary P5 BEV raster of each cloud (vehicle frame)
//! ```

use super::bev::{load_kitti_scan, rasterize_bev};
use super::image::RgbImage;
use super::map::Pose;
use super::synth::{Waypoint, World, WorldMeta};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(dir: &Path, world: &World) -> Result<()> {
    mkdir(&dir.join("clouds"))?;
    mkdir(&dir.join("bev"))?;
    write(&dir.join("world.json"), serde_json::to_vec_pretty(&world.meta)?)?;
    world.map.save_ppm(&dir.join("map.ppm"))?;
    let mut csv = String::from("index,x_px,y_px,theta_deg\n");
    for wp in &world.waypoints {
        writeln!(csv, "{},{},{},{}", wp.index, wp.pose.x, wp.pose.y, wp.pose.theta_deg).unwrap();
        write(
            &dir.join(format!("clouds/{:04}.bin", wp.index)),
            wp.cloud.to_kitti_bytes(),
        )?;
        let bev = rasterize_bev(&wp.cloud, world.meta.resolution, world.meta.tile_size);
        write(&dir.join(format!("bev/{:04}.pgm", wp.index)), bev.as_gray().to_pgm())?;
    }
    write(&dir.join("poses.csv"), csv)
}

pub fn parse_poses_csv(text: &str) -> Result<Vec<(usize, Pose)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "index,x_px,y_px,theta_deg" => {}
        other => {
            return Err(Error::Format(format!(
                "poses.csv: unexpected header {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Format(format!("poses.csv line {}: {line:?}", ln + 2));
        if f.len() != 4 {
            return Err(bad());
        }
        let index = f[0].parse().map_err(|_| bad())?;
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        out.push((
            index,
            Pose {
                x: num(f[1])?,
                y: num(f[2])?,
                theta_deg: num(f[3])?,
            },
        ));
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> Result<World> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let meta: WorldMeta = serde_json::from_slice(&read(&dir.join("world.json"))?)?;
    let map = RgbImage::from_ppm(&read(&dir.join("map.ppm"))?)?;
    let poses_path = dir.join("poses.csv");
    let text = String::from_utf8(read(&poses_path)?)
        .map_err(|_| Error::Format("poses.csv is not UTF-8".into()))?;
    let mut waypoints = Vec::new();
    for (index, pose) in parse_poses_csv(&text)? {
        let cloud = load_kitti_scan(&dir.join(format!("clouds/{index:04}.bin")))?;
        waypoints.push(Waypoint { index, pose, cloud });
    }
    Ok(World {
        meta,
        map,
        waypoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::synth_world;

    #[test]
    fn dataset_round_trip() {
        let w = synth_world(4, 128, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &w).unwrap();
        assert!(dir.path().join("bev/0002.pgm").exists());
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn poses_csv_errors() {
        assert!(parse_poses_csv("idx,x,y\n").is_err());
        assert!(parse_poses_csv("index,x_px,y_px,theta_deg\n1,2,3\n").is_err());
        assert!(parse_poses_csv("index,x_px,y_px,theta_deg\n1,2,nan,3\n").is_err());
        let ok = parse_poses_csv("index,x_px,y_px,theta_deg\n0,40,41.5,-3\n\n").unwrap();
        assert_eq!(ok[0].1, Pose { x: 40.0, y: 41.5, theta_deg: -3.0 });
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
    }
}
