use super::scorer::Scorer;
use crate::data::{
    heading_candidates, rasterize_bev, rotate_bev, strided_indices, valid_centers, BevImage,
    PointCloud, Pose, SatMap, RESOLUTION_M_PER_PX,
};
use crate::error::{config_err, contract_err, shape_err, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Ct,
    Cnn,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Stage-1 pixel skip.
    pub m: usize,
    /// Stage-1 heading skip, in heading-candidate steps.
    pub n: usize,
    /// Stage-1 candidates refined in stage 2.
    pub k: usize,
    pub half_width_deg: f64,
    pub heading_step_deg: f64,
    pub scorer: ScorerKind,
    /// Results with `α*` below this are flagged low-confidence.
    pub confidence_floor: Option<f32>,
    /// Keep every scored pair in [`SearchResult::table`].
    pub keep_table: bool,
    pub resolution: f32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            m: 3,
            n: 2,
            k: 8,
            half_width_deg: 10.0,
            heading_step_deg: 1.0,
            scorer: ScorerKind::Ct,
            confidence_floor: None,
            keep_table: false,
            resolution: RESOLUTION_M_PER_PX,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(config_err!(
                "m, n and k must be at least 1 (got {}, {}, {})",
                self.m,
                self.n,
                self.k
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub x: usize,
    pub y: usize,
    pub theta: f64,
    pub alpha: f32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub stage1_pairs: usize,
    pub stage2_pairs: usize,
    pub stage1_ms: f64,
    pub stage2_ms: f64,
}

impl SearchStats {
    pub fn total_pairs(&self) -> usize {
        self.stage1_pairs + self.stage2_pairs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub pose: Pose,
    pub score: f32,
    pub low_confidence: bool,
    /// Top stage-1 candidates, best first. Empty for exhaustive search.
    pub stage1: Vec<ScoreEntry>,
    pub stats: SearchStats,
    #[serde(skip)]
    pub table: Vec<ScoreEntry>,
}

/// Stage-1 pair count for a map with `span × span` valid centres.
pub fn stage1_pair_count(span_x: usize, span_y: usize, n_theta: usize, m: usize, n: usize) -> usize {
    span_x.div_ceil(m) * span_y.div_ceil(m) * n_theta.div_ceil(n)
}

/// Pair count of the exhaustive search.
pub fn exhaustive_pair_count(span_x: usize, span_y: usize, n_theta: usize) -> usize {
    span_x * span_y * n_theta
}

struct Grid {
    x0: usize,
    y0: usize,
    span_x: usize,
    span_y: usize,
}

fn grid(map: &SatMap, rotations: &[BevImage]) -> Result<Grid> {
    let first = rotations
        .first()
        .ok_or_else(|| contract_err!("search needs at least one lidar rotation"))?;
    let d = first.size();
    if rotations.iter().any(|r| r.size() != d) {
        return Err(shape_err!("lidar rotations differ in size"));
    }
    let xs = valid_centers(map.width(), d)?;
    let ys = valid_centers(map.height(), d)?;
    Ok(Grid {
        x0: *xs.start(),
        y0: *ys.start(),
        span_x: xs.end() - xs.start() + 1,
        span_y: ys.end() - ys.start() + 1,
    })
}

/// Scores `cells` (rotation index, y offset, x offset) in order and returns
/// them with their scores. Rejects non-finite scores.
fn score_cells(
    scorer: &mut dyn super::PreparedScorer,
    g: &Grid,
    cells: impl IntoIterator<Item = (usize, usize, usize)>,
) -> Result<Vec<((usize, usize, usize), f32)>> {
    cells
        .into_iter()
        .map(|c| {
            let a = scorer.score(c.0, g.x0 + c.2, g.y0 + c.1)?;
            if !a.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite score at rotation {}, ({}, {})",
                    c.0,
                    g.x0 + c.2,
                    g.y0 + c.1
                )));
            }
            Ok((c, a))
        })
        .collect()
}

/// Highest score; ties go to the cell listed first (cells are scored in
/// lexicographic `(θ, y, x)` order).
fn best(scored: &[((usize, usize, usize), f32)]) -> ((usize, usize, usize), f32) {
    let mut top = scored[0];
    for &s in &scored[1..] {
        if s.1 > top.1 || (s.1 == top.1 && s.0 < top.0) {
            top = s;
        }
    }
    top
}

fn entry(g: &Grid, thetas: &[f64], c: (usize, usize, usize), alpha: f32) -> ScoreEntry {
    ScoreEntry {
        x: g.x0 + c.2,
        y: g.y0 + c.1,
        theta: thetas[c.0],
        alpha,
    }
}

fn finish(
    g: &Grid,
    thetas: &[f64],
    top: ((usize, usize, usize), f32),
    stage1: Vec<ScoreEntry>,
    stats: SearchStats,
    table: Vec<ScoreEntry>,
) -> SearchResult {
    let e = entry(g, thetas, top.0, top.1);
    SearchResult {
        pose: Pose {
            x: e.x as f64,
            y: e.y as f64,
            theta_deg: e.theta,
        },
        score: top.1,
        low_confidence: false,
        stage1,
        stats,
        table,
    }
}

fn check_thetas(rotations: &[BevImage], thetas: &[f64]) -> Result<()> {
    if rotations.len() != thetas.len() {
        return Err(shape_err!(
            "{} rotations but {} headings",
            rotations.len(),
            thetas.len()
        ));
    }
    Ok(())
}

/// Scores every (heading, tile) pair at full resolution.
pub fn exhaustive_search(
    rotations: &[BevImage],
    thetas: &[f64],
    map: &SatMap,
    scorer: &dyn Scorer,
) -> Result<SearchResult> {
    check_thetas(rotations, thetas)?;
    let g = grid(map, rotations)?;
    let mut prepared = scorer.prepare(map, rotations)?;
    let start = Instant::now();
    let cells = (0..rotations.len())
        .flat_map(|t| (0..g.span_y).flat_map(move |y| (0..g.span_x).map(move |x| (t, y, x))));
    let scored = score_cells(prepared.as_mut(), &g, cells)?;
    let stats = SearchStats {
        stage1_pairs: scored.len(),
        stage1_ms: start.elapsed().as_secs_f64() * 1e3,
        ..Default::default()
    };
    let top = best(&scored);
    let table = scored.iter().map(|&(c, a)| entry(&g, thetas, c, a)).collect();
    Ok(finish(&g, thetas, top, Vec::new(), stats, table))
}

/// Coarse strided search followed by full-resolution refinement around the
/// top `k` coarse candidates.
pub fn two_stage_search(
    rotations: &[BevImage],
    thetas: &[f64],
    map: &SatMap,
    scorer: &dyn Scorer,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    check_thetas(rotations, thetas)?;
    let g = grid(map, rotations)?;
    let mut prepared = scorer.prepare(map, rotations)?;
    let (m, n) = (cfg.m, cfg.n);

    let start = Instant::now();
    let ts = strided_indices(rotations.len(), n);
    let ys = strided_indices(g.span_y, m);
    let xs = strided_indices(g.span_x, m);
    let mut cells = Vec::with_capacity(ts.len() * ys.len() * xs.len());
    for &t in &ts {
        for &y in &ys {
            for &x in &xs {
                cells.push((t, y, x));
            }
        }
    }
    let mut coarse = score_cells(prepared.as_mut(), &g, cells)?;
    let stage1_pairs = coarse.len();
    let stage1_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut table = if cfg.keep_table { coarse.clone() } else { Vec::new() };
    let start = Instant::now();
    coarse.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    coarse.truncate(cfg.k);
    let window = |c: usize, r: usize, len: usize| c.saturating_sub(r)..=(c + r).min(len - 1);
    let mut fine = BTreeSet::new();
    for &((t, y, x), _) in &coarse {
        for tt in window(t, n - 1, rotations.len()) {
            for yy in window(y, m - 1, g.span_y) {
                for xx in window(x, m - 1, g.span_x) {
                    fine.insert((tt, yy, xx));
                }
            }
        }
    }
    let scored = score_cells(prepared.as_mut(), &g, fine)?;
    let stats = SearchStats {
        stage1_pairs,
        stage2_pairs: scored.len(),
        stage1_ms,
        stage2_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let top = best(&scored);
    let stage1 = coarse.iter().map(|&(c, a)| entry(&g, thetas, c, a)).collect();
    // every pair scored in either stage, once
    if cfg.keep_table {
        table.extend_from_slice(&scored);
        table.sort_by_key(|&(c, _)| c);
        table.dedup_by_key(|&mut (c, _)| c);
    }
    let table = table.iter().map(|&(c, a)| entry(&g, thetas, c, a)).collect();
    Ok(finish(&g, thetas, top, stage1, stats, table))
}

/// Heading candidates around `theta_prior` and the lidar raster rotated to
/// each of them.
pub fn rotation_candidates(
    bev: &BevImage,
    theta_prior: f64,
    cfg: &SearchConfig,
) -> Result<(Vec<f64>, Vec<BevImage>)> {
    let thetas = heading_candidates(theta_prior, cfg.half_width_deg, cfg.heading_step_deg)?;
    let rotations = thetas.iter().map(|&t| rotate_bev(bev, t)).collect();
    Ok((thetas, rotations))
}

/// Full query pipeline: rasterize, rotate over the heading prior, search.
pub fn localize(
    cloud: &PointCloud,
    map: &SatMap,
    theta_prior: f64,
    tile_size: usize,
    scorer: &dyn Scorer,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    let bev = rasterize_bev(cloud, cfg.resolution, tile_size);
    let (thetas, rotations) = rotation_candidates(&bev, theta_prior, cfg)?;
    let mut result = two_stage_search(&rotations, &thetas, map, scorer, cfg)?;
    if let Some(floor) = cfg.confidence_floor {
        result.low_confidence = result.score < floor;
    }
    Ok(result)
}
