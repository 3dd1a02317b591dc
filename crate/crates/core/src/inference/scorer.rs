use crate::data::{BevImage, SatMap};
use crate::error::{shape_err, Result};

/// A pair scoring function bound to one map and one set of lidar rotations.
pub trait PreparedScorer {
    /// Similarity `α` of rotation `rotation` paired with the tile centred at
    /// `(x, y)`. Energy is `−α`.
    fn score(&mut self, rotation: usize, x: usize, y: usize) -> Result<f32>;
}

/// Anything that can score lidar/satellite pairs over a map.
pub trait Scorer {
    /// Precomputes whatever the scorer can share across pairs.
    fn prepare<'a>(
        &'a self,
        map: &'a SatMap,
        rotations: &'a [BevImage],
    ) -> Result<Box<dyn PreparedScorer + 'a>>;
}

/// Analytic scorer `α = −mean |I_L − gray(I_S)|` with both images in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelL1Oracle;

struct PreparedOracle {
    gray: Vec<f32>,
    width: usize,
    lidar: Vec<Vec<f32>>,
    d: usize,
}

impl Scorer for PixelL1Oracle {
    fn prepare<'a>(
        &'a self,
        map: &'a SatMap,
        rotations: &'a [BevImage],
    ) -> Result<Box<dyn PreparedScorer + 'a>> {
        let d = rotations.first().map_or(0, BevImage::size);
        Ok(Box::new(PreparedOracle {
            gray: map.gray_f32(),
            width: map.width(),
            lidar: rotations
                .iter()
                .map(|r| r.as_raw().iter().map(|&v| v as f32 / 255.0).collect())
                .collect(),
            d,
        }))
    }
}

impl PreparedScorer for PreparedOracle {
    fn score(&mut self, rotation: usize, x: usize, y: usize) -> Result<f32> {
        let d = self.d;
        let lidar = self
            .lidar
            .get(rotation)
            .ok_or_else(|| shape_err!("rotation {rotation} out of range"))?;
        let (x0, y0) = (x - d / 2, y - d / 2);
        let mut sum = 0.0f32;
        for r in 0..d {
            let g = &self.gray[(y0 + r) * self.width + x0..][..d];
            let l = &lidar[r * d..][..d];
            sum += g.iter().zip(l).map(|(a, b)| (a - b).abs()).sum::<f32>();
        }
        Ok(-sum / (d * d) as f32)
    }
}

/// Wraps a scorer and passes its scores through a fixed function.
pub struct MappedScorer<S, F> {
    pub inner: S,
    pub map: F,
}

impl<S: Scorer, F: Fn(f32) -> f32> Scorer for MappedScorer<S, F> {
    fn prepare<'a>(
        &'a self,
        map: &'a SatMap,
        rotations: &'a [BevImage],
    ) -> Result<Box<dyn PreparedScorer + 'a>> {
        struct P<'a, F> {
            inner: Box<dyn PreparedScorer + 'a>,
            f: &'a F,
        }
        impl<F: Fn(f32) -> f32> PreparedScorer for P<'_, F> {
            fn score(&mut self, rotation: usize, x: usize, y: usize) -> Result<f32> {
                Ok((self.f)(self.inner.score(rotation, x, y)?))
            }
        }
        Ok(Box::new(P {
            inner: self.inner.prepare(map, rotations)?,
            f: &self.map,
        }))
    }
}
