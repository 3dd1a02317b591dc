//! Model-backed pair scoring for the pose search.
//!
//! The first tokenizer convolution is linear in its input, so its satellite
//! half is evaluated once over the whole map and its lidar half once per
//! rotation. Each pair then only adds the two responses, except along the
//! tile border where the zero padding of a standalone tile differs from the
//! map context and the satellite response is recomputed from the tile.

use super::net::{self, BoundVars, CtVars};
use super::{Bound, EnergyModel, PairTensor};
use crate::data::{crop_tile, BevImage, SatMap};
use crate::error::{shape_err, Result};
use crate::inference::{PreparedScorer, Scorer};
use crate::numerics::kernels::{self, ConvGeom};
use crate::numerics::{Padding, Tape, Tensor};

/// Scores pairs with an [`EnergyModel`]. `fast` enables the shared
/// first-stage precomputation for CT backbones.
pub struct ModelScorer<'m> {
    pub model: &'m EnergyModel,
    pub fast: bool,
}

impl<'m> ModelScorer<'m> {
    pub fn new(model: &'m EnergyModel) -> Self {
        ModelScorer { model, fast: true }
    }

    /// Builds every pair tensor and runs the full forward pass.
    pub fn plain(model: &'m EnergyModel) -> Self {
        ModelScorer { model, fast: false }
    }
}

impl Scorer for EnergyModel {
    fn prepare<'a>(
        &'a self,
        map: &'a SatMap,
        rotations: &'a [BevImage],
    ) -> Result<Box<dyn PreparedScorer + 'a>> {
        prepare(self, true, map, rotations)
    }
}

impl Scorer for ModelScorer<'_> {
    fn prepare<'a>(
        &'a self,
        map: &'a SatMap,
        rotations: &'a [BevImage],
    ) -> Result<Box<dyn PreparedScorer + 'a>> {
        prepare(self.model, self.fast, map, rotations)
    }
}

fn prepare<'a>(
    model: &'a EnergyModel,
    fast: bool,
    map: &'a SatMap,
    rotations: &'a [BevImage],
) -> Result<Box<dyn PreparedScorer + 'a>> {
    model.check_finite()?;
    let d = model.input_size();
    if let Some(r) = rotations.iter().find(|r| r.size() != d) {
        return Err(shape_err!("lidar is {0}×{0}, model expects {d}×{d}", r.size()));
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let base = tape.len();
    if fast && matches!(bound.net, BoundVars::Ct(_)) {
        Ok(Box::new(FastCt::new(model, tape, bound, map, rotations)?))
    } else {
        Ok(Box::new(Plain {
            model,
            tape,
            bound,
            base,
            map,
            rotations,
        }))
    }
}

struct Plain<'a> {
    model: &'a EnergyModel,
    tape: Tape,
    bound: Bound,
    base: usize,
    map: &'a SatMap,
    rotations: &'a [BevImage],
}

impl PreparedScorer for Plain<'_> {
    fn score(&mut self, rotation: usize, x: usize, y: usize) -> Result<f32> {
        let d = self.model.input_size();
        let lidar = self
            .rotations
            .get(rotation)
            .ok_or_else(|| shape_err!("rotation {rotation} out of range"))?;
        let pair = PairTensor::new(lidar, &crop_tile(self.map, x, y, d)?)?;
        let a = self.model.forward(&mut self.tape, &self.bound, &pair, None)?;
        let v = self.tape.value(a).item();
        self.tape.rewind(self.base);
        Ok(v)
    }
}

struct FastCt<'a> {
    model: &'a EnergyModel,
    tape: Tape,
    bound: Bound,
    base: usize,
    map: &'a SatMap,
    d: usize,
    c1: usize,
    /// Lidar half of the first convolution (with bias), per rotation.
    lidar: Vec<Vec<f32>>,
    /// Satellite half over the whole map, `H×W×c1`.
    sat: Vec<f32>,
    sat_kernel: Vec<f32>,
    /// Tile geometry of the satellite half and its border pixel indices.
    geom: ConvGeom,
    ring: Vec<usize>,
    cols: Vec<f32>,
    sat_tile: Vec<f32>,
}

fn conv_once(input: Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let x = tape.constant(input);
    let k = tape.constant(kernel.clone());
    let b = bias.map(|b| tape.constant(b.clone()));
    let y = tape.conv2d(x, k, b, 1, Padding::Same)?;
    Ok(tape.value(y).data().to_vec())
}

impl<'a> FastCt<'a> {
    fn new(
        model: &'a EnergyModel,
        tape: Tape,
        bound: Bound,
        map: &'a SatMap,
        rotations: &'a [BevImage],
    ) -> Result<Self> {
        let v: &CtVars = match &bound.net {
            BoundVars::Ct(v) => v,
            BoundVars::Cnn(_) => unreachable!(),
        };
        let d = model.input_size();
        let k_lidar = tape.value(v.conv1_lidar).clone();
        let k_sat = tape.value(v.conv1_sat).clone();
        let bias = tape.value(v.conv1_bias).clone();
        let (k, c1) = (k_sat.shape()[0], k_sat.shape()[3]);
        let pad = (k - 1) / 2;

        let lidar = rotations
            .iter()
            .map(|r| {
                let t = Tensor::new(
                    &[d, d, 1],
                    r.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
                )?;
                conv_once(t, &k_lidar, Some(&bias))
            })
            .collect::<Result<Vec<_>>>()?;
        let map_t = Tensor::new(
            &[map.height(), map.width(), 3],
            map.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        )?;
        let sat = conv_once(map_t, &k_sat, None)?;

        let geom = ConvGeom {
            h: d,
            w: d,
            cin: 3,
            cout: c1,
            k,
            stride: 1,
            pad,
            oh: d,
            ow: d,
        };
        let ring: Vec<usize> = (0..d * d)
            .filter(|&i| {
                let (r, c) = (i / d, i % d);
                r < pad || c < pad || r + pad >= d || c + pad >= d
            })
            .collect();
        let base = tape.len();
        Ok(FastCt {
            model,
            tape,
            bound,
            base,
            map,
            d,
            c1,
            lidar,
            sat,
            sat_kernel: k_sat.into_data(),
            cols: vec![0.0; ring.len() * geom.patch_len()],
            ring,
            geom,
            sat_tile: vec![0.0; d * d * c1],
        })
    }

    /// Satellite half of the first convolution for the tile at `(x, y)`.
    fn fill_sat_tile(&mut self, x: usize, y: usize) -> Result<()> {
        let (d, c1) = (self.d, self.c1);
        let tile = crop_tile(self.map, x, y, d)?;
        let (x0, y0) = (x - d / 2, y - d / 2);
        let w = self.map.width();
        for r in 0..d {
            let src = ((y0 + r) * w + x0) * c1;
            self.sat_tile[r * d * c1..(r + 1) * d * c1].copy_from_slice(&self.sat[src..src + d * c1]);
        }
        if self.ring.is_empty() {
            return Ok(());
        }
        let input: Vec<f32> = tile.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        let pl = self.geom.patch_len();
        for (j, &i) in self.ring.iter().enumerate() {
            kernels::im2col_row(&self.geom, &input, i / d, i % d, &mut self.cols[j * pl..(j + 1) * pl]);
        }
        let out = kernels::conv_from_cols(&self.geom, &self.cols, self.ring.len(), &self.sat_kernel, None);
        for (j, &i) in self.ring.iter().enumerate() {
            self.sat_tile[i * c1..(i + 1) * c1].copy_from_slice(&out[j * c1..(j + 1) * c1]);
        }
        Ok(())
    }
}

/// `maxpool2(relu(a + b))` in one pass; ReLU commutes with the max.
fn sum_relu_pool(a: &[f32], b: &[f32], d: usize, c: usize) -> Vec<f32> {
    let o = d / 2;
    let mut out = Vec::with_capacity(o * o * c);
    let mut acc = vec![0.0f32; c];
    for oy in 0..o {
        for ox in 0..o {
            acc.fill(0.0);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let i = ((2 * oy + dy) * d + 2 * ox + dx) * c;
                for ((m, x), y) in acc.iter_mut().zip(&a[i..i + c]).zip(&b[i..i + c]) {
                    let s = x + y;
                    *m = if s > *m { s } else { *m };
                }
            }
            out.extend_from_slice(&acc);
        }
    }
    out
}

impl PreparedScorer for FastCt<'_> {
    fn score(&mut self, rotation: usize, x: usize, y: usize) -> Result<f32> {
        let (d, c1) = (self.d, self.c1);
        if rotation >= self.lidar.len() {
            return Err(shape_err!("rotation {rotation} out of range"));
        }
        self.fill_sat_tile(x, y)?;
        let pooled = sum_relu_pool(&self.lidar[rotation], &self.sat_tile, d, c1);
        let c = match self.model.config() {
            super::ModelConfig::Ct(c) => c,
            super::ModelConfig::Cnn(_) => unreachable!(),
        };
        let v = match &self.bound.net {
            BoundVars::Ct(v) => v,
            BoundVars::Cnn(_) => unreachable!(),
        };
        let pooled = self.tape.constant(Tensor::new(&[d / 2, d / 2, c1], pooled)?);
        let z0 = net::tokenize_rest(&mut self.tape, v, pooled)?;
        let a = net::ct_from_tokens(&mut self.tape, c, v, z0, None)?;
        let out = self.tape.value(a).item();
        self.tape.rewind(self.base);
        Ok(out)
    }
}
