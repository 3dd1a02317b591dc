//! Shared fixtures for the benchmarks.

use ecml_core::data::{rasterize_bev, rotate_bev, synth_world, BevImage, World};
use ecml_core::model::{CtConfig, EnergyModel, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded `size × size` world with `waypoints` scans.
pub fn world(size: usize, waypoints: usize) -> World {
    synth_world(1, size, waypoints).expect("synthetic world")
}

/// Untrained model with the default CT configuration.
pub fn ct_model() -> EnergyModel {
    ct_model_with(CtConfig::default())
}

pub fn ct_model_with(config: CtConfig) -> EnergyModel {
    EnergyModel::new(ModelConfig::Ct(config), &mut ChaCha8Rng::seed_from_u64(0)).expect("model")
}

/// The aligned BEV raster of waypoint `i`.
pub fn aligned_bev(world: &World, i: usize) -> BevImage {
    let wp = &world.waypoints[i];
    let bev = rasterize_bev(&wp.cloud, world.meta.resolution, world.meta.tile_size);
    rotate_bev(&bev, wp.pose.theta_deg)
}
