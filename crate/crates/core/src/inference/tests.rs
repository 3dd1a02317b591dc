use super::*;
use crate::data::{rasterize_bev, synth_world, BevImage, Pose, RgbImage, World};

/// Exhaustive oracle search with the prior centred on the true heading.
fn oracle_query(w: &World, i: usize, half_width: f64) -> SearchResult {
    let wp = &w.waypoints[i];
    let cfg = SearchConfig {
        half_width_deg: half_width,
        m: 1,
        n: 1,
        k: 1,
        ..Default::default()
    };
    let bev = rasterize_bev(&wp.cloud, w.meta.resolution, 64);
    let (thetas, rots) = rotation_candidates(&bev, wp.pose.theta_deg, &cfg).unwrap();
    exhaustive_search(&rots, &thetas, &w.map, &PixelL1Oracle).unwrap()
}

#[test]
fn single_candidate_map() {
    let map = RgbImage::new(64, 64);
    let r = exhaustive_search(&[BevImage::new(64)], &[0.0], &map, &PixelL1Oracle).unwrap();
    assert_eq!(r.stats.stage1_pairs, 1);
    assert_eq!((r.pose.x, r.pose.y), (32.0, 32.0));
}

#[test]
fn map_smaller_than_tile_is_bounds_error() {
    let map = RgbImage::new(60, 80);
    let r = exhaustive_search(&[BevImage::new(64)], &[0.0], &map, &PixelL1Oracle);
    assert!(matches!(r, Err(crate::Error::Bounds(_))));
    let r = exhaustive_search(&[], &[], &RgbImage::new(64, 64), &PixelL1Oracle);
    assert!(r.is_err());
}

#[test]
fn oracle_recovers_heading_within_prior() {
    let w = synth_world(11, 192, 3).unwrap();
    for i in 0..3 {
        let r = oracle_query(&w, i, 3.0);
        let p = w.waypoints[i].pose;
        assert_eq!(r.pose, p);
        assert_eq!(r.stats.stage1_pairs, 129 * 129 * 7);
    }
}

#[test]
fn mirrored_map_breaks_ties_lexicographically() {
    let mut map = RgbImage::new(100, 64);
    for y in 20..30 {
        map.set(y, 40, [255; 3]);
        map.set(y, 60, [255; 3]);
    }
    let mut bev = BevImage::new(64);
    for y in 20..30 {
        bev.set(y, 32, 255);
    }
    let r = exhaustive_search(&[bev], &[0.0], &map, &PixelL1Oracle).unwrap();
    assert_eq!((r.pose.x, r.pose.y), (40.0, 32.0));
    let best = r.table.iter().map(|e| e.alpha).fold(f32::MIN, f32::max);
    assert_eq!(r.score, best);
    assert_eq!(r.table.iter().filter(|e| e.alpha == best).count(), 2);
}

#[test]
fn pair_counts() {
    assert_eq!(stage1_pair_count(129, 129, 21, 3, 2), 20_339);
    assert_eq!(exhaustive_pair_count(129, 129, 21), 349_461);
    let w = synth_world(3, 192, 1).unwrap();
    let wp = &w.waypoints[0];
    let bev = rasterize_bev(&wp.cloud, w.meta.resolution, 64);
    let cfg = SearchConfig::default();
    let (thetas, rots) = rotation_candidates(&bev, wp.pose.theta_deg, &cfg).unwrap();
    let r = two_stage_search(&rots, &thetas, &w.map, &PixelL1Oracle, &cfg).unwrap();
    assert_eq!(r.stats.stage1_pairs, 20_339);
    assert!(r.stats.stage2_pairs <= 8 * 5 * 5 * 3);
    assert_eq!(r.stage1.len(), 8);
}

#[test]
fn degenerate_strides_match_exhaustive() {
    for seed in 0..2 {
        let w = synth_world(seed, 160, 3).unwrap();
        for wp in &w.waypoints {
            let bev = rasterize_bev(&wp.cloud, w.meta.resolution, 64);
            let cfg = SearchConfig {
                m: 1,
                n: 1,
                k: 1,
                half_width_deg: 2.0,
                keep_table: true,
                ..Default::default()
            };
            let (thetas, rots) = rotation_candidates(&bev, wp.pose.theta_deg + 1.0, &cfg).unwrap();
            let ex = exhaustive_search(&rots, &thetas, &w.map, &PixelL1Oracle).unwrap();
            let two = two_stage_search(&rots, &thetas, &w.map, &PixelL1Oracle, &cfg).unwrap();
            assert_eq!(ex.pose, two.pose);
            assert_eq!(two.table.len(), ex.table.len());
            for e in &two.table {
                assert!(ex.table.contains(e));
            }
            // k covering the whole coarse grid reproduces the exhaustive answer
            let all = SearchConfig {
                m: 4,
                n: 2,
                k: usize::MAX,
                ..cfg
            };
            let cover = two_stage_search(&rots, &thetas, &w.map, &PixelL1Oracle, &all).unwrap();
            assert_eq!(cover.pose, ex.pose);
            assert_eq!(cover.stats.stage2_pairs, ex.stats.stage1_pairs);
        }
    }
}

#[test]
fn increasing_transforms_keep_the_argmax() {
    let w = synth_world(5, 160, 2).unwrap();
    let wp = &w.waypoints[1];
    let bev = rasterize_bev(&wp.cloud, w.meta.resolution, 64);
    let cfg = SearchConfig::default();
    let (thetas, rots) = rotation_candidates(&bev, wp.pose.theta_deg - 3.0, &cfg).unwrap();
    let base = two_stage_search(&rots, &thetas, &w.map, &PixelL1Oracle, &cfg).unwrap();
    let scaled = MappedScorer {
        inner: PixelL1Oracle,
        map: |a: f32| 3.0 * a + 7.0,
    };
    let r = two_stage_search(&rots, &thetas, &w.map, &scaled, &cfg).unwrap();
    assert_eq!(r.pose, base.pose);
}

#[test]
fn empty_cloud_is_low_confidence_and_deterministic() {
    let w = synth_world(6, 160, 1).unwrap();
    let cfg = SearchConfig {
        confidence_floor: Some(-0.05),
        ..Default::default()
    };
    let empty = crate::data::PointCloud::default();
    let a = localize(&empty, &w.map, 0.0, 64, &PixelL1Oracle, &cfg).unwrap();
    let b = localize(&empty, &w.map, 0.0, 64, &PixelL1Oracle, &cfg).unwrap();
    assert!(a.low_confidence);
    assert_eq!((a.pose, a.score, &a.stage1), (b.pose, b.score, &b.stage1));
}

#[test]
fn exact_heading_prior_localizes_exactly() {
    let w = synth_world(9, 192, 10).unwrap();
    let cfg = SearchConfig {
        half_width_deg: 0.0,
        ..Default::default()
    };
    for wp in &w.waypoints {
        let r = localize(&wp.cloud, &w.map, wp.pose.theta_deg, 64, &PixelL1Oracle, &cfg).unwrap();
        assert_eq!(
            r.pose,
            Pose {
                theta_deg: wp.pose.theta_deg,
                ..wp.pose
            }
        );
    }
}

#[test]
fn score_table_export() {
    let t = [ScoreEntry {
        x: 32,
        y: 40,
        theta: -1.5,
        alpha: 0.25,
    }];
    assert_eq!(score_table_csv(&t), "x,y,theta,alpha\n32,40,-1.5,0.25\n");
}
