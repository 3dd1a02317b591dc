//! Point-cloud ingestion, BEV rasterization, map tiling, synthetic worlds and
//! training batches.

mod batch;
mod bev;
mod image;
pub mod io;
mod map;
mod synth;

pub use batch::{make_training_batch, BatchConfig, PairBatch, PairCandidate};
pub use bev::{
    load_kitti_scan, rasterize_bev, rotate_bev, BevImage, Point, PointCloud, BEV_SIZE,
    COUNT_INTENSITY, RESOLUTION_M_PER_PX,
};
pub use image::{GrayImage, RgbImage};
pub use io::{load_dataset, parse_poses_csv, save_dataset};
pub use map::{
    crop_rotated, crop_tile, enumerate_tiles, heading_candidates, strided_indices, tile_fits,
    valid_centers, Pose, SatMap, SatTile,
};
pub use synth::{synth_world, synth_world_with, SynthConfig, Waypoint, World, WorldMeta};
