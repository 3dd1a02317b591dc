//! The pair energy function: a convolutional transformer or a CNN baseline
//! mapping a lidar/satellite pair to a similarity score `α` (energy `−α`).

mod config;
mod net;
mod scorer;
#[cfg(test)]
mod tests;

pub use config::{Activation, CnnConfig, ConvStage, CtConfig, ModelConfig};
pub use scorer::ModelScorer;

use crate::data::{BevImage, SatTile};
use crate::error::{contract_err, shape_err, Error, Result};
use crate::numerics::{load_checkpoint, save_checkpoint, NamedTensor, Tape, Tensor, Var};
use config::{param_specs, Init};
use net::{BoundVars, CnnVars, CtVars};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// A `d×d×4` network input: lidar channel then satellite RGB, all in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTensor(Tensor);

impl PairTensor {
    pub fn new(lidar: &BevImage, tile: &SatTile) -> Result<Self> {
        let d = lidar.size();
        if tile.width() != d || tile.height() != d {
            return Err(shape_err!(
                "lidar is {d}×{d} but tile is {}×{}",
                tile.width(),
                tile.height()
            ));
        }
        let mut data = Vec::with_capacity(d * d * 4);
        for (l, s) in lidar.as_raw().iter().zip(tile.as_raw().chunks_exact(3)) {
            data.push(*l as f32 / 255.0);
            data.extend(s.iter().map(|&v| v as f32 / 255.0));
        }
        Ok(PairTensor(Tensor::new(&[d, d, 4], data)?))
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        match t.shape() {
            &[h, w, 4] if h == w => Ok(PairTensor(t)),
            s => Err(shape_err!("pair tensor must be d×d×4, got {s:?}")),
        }
    }

    pub fn size(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    /// `(lidar d×d×1, satellite d×d×3)`.
    pub fn split(&self) -> (Tensor, Tensor) {
        let d = self.size();
        let mut l = Vec::with_capacity(d * d);
        let mut s = Vec::with_capacity(d * d * 3);
        for px in self.0.data().chunks_exact(4) {
            l.push(px[0]);
            s.extend_from_slice(&px[1..]);
        }
        (
            Tensor::new(&[d, d, 1], l).unwrap(),
            Tensor::new(&[d, d, 3], s).unwrap(),
        )
    }
}

/// Model parameters bound to a tape.
pub struct Bound {
    vars: Vec<Var>,
    net: BoundVars,
}

impl Bound {
    /// Tape handle of every parameter, in [`EnergyModel::names`] order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// JSON sidecar stored next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(flatten)]
    pub config: ModelConfig,
    /// Scores below this flag a search result as low-confidence.
    #[serde(default)]
    pub confidence_floor: Option<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    pub confidence_floor: Option<f32>,
}

impl EnergyModel {
    /// Freshly initialized model.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for s in specs {
            let t = match s.init {
                Init::Zeros => Tensor::zeros(&s.shape),
                Init::Ones => Tensor::ones(&s.shape),
                Init::Projection => Tensor::trunc_normal(&s.shape, 0.02, rng),
                Init::Kaiming(fan_in) => {
                    Tensor::trunc_normal(&s.shape, (2.0 / fan_in as f32).sqrt(), rng)
                }
            };
            names.push(s.name);
            params.push(t);
        }
        Ok(EnergyModel {
            config,
            names,
            params,
            confidence_floor: None,
        })
    }

    /// Model with the given named tensors, checked against the configuration.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<NamedTensor>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, configuration needs {}",
                tensors.len(),
                specs.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (s, (name, t)) in specs.into_iter().zip(tensors) {
            if s.name != name || s.shape != t.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    s.name,
                    s.shape
                )));
            }
            names.push(name);
            params.push(t);
        }
        Ok(EnergyModel {
            config,
            names,
            params,
            confidence_floor: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_size(&self) -> usize {
        self.config.input_size()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        self.names.iter().cloned().zip(self.params.iter().cloned()).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.params.iter().position(|t| !t.is_finite()) {
            Some(i) => Err(contract_err!("parameter {} is not finite", self.names[i])),
            None => Ok(()),
        }
    }

    /// Pushes every parameter onto `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        let mut it = vars.iter().copied();
        let net = match &self.config {
            ModelConfig::Ct(c) => BoundVars::Ct(CtVars::from_iter(c, &mut it)),
            ModelConfig::Cnn(c) => BoundVars::Cnn(CnnVars::from_iter(c, &mut it)),
        };
        Bound { vars, net }
    }

    /// Records the score of `pair` on `tape`; returns the scalar node.
    /// `rng` enables dropout.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pair: &PairTensor,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        if pair.size() != self.input_size() {
            return Err(crate::error::config_err!(
                "pair is {0}×{0}, model expects {1}×{1}",
                pair.size(),
                self.input_size()
            ));
        }
        match (&self.config, &bound.net) {
            (ModelConfig::Ct(c), BoundVars::Ct(v)) => {
                let (l, s) = pair.split();
                let l = tape.constant(l);
                let s = tape.constant(s);
                let z0 = net::tokenize(tape, v, l, s)?;
                net::ct_from_tokens(tape, c, v, z0, rng)
            }
            (ModelConfig::Cnn(_), BoundVars::Cnn(v)) => {
                let x = tape.constant(pair.tensor().clone());
                net::cnn_forward(tape, v, x)
            }
            _ => Err(contract_err!("bound parameters belong to another backbone")),
        }
    }

    fn ct(&self) -> Result<&CtConfig> {
        match &self.config {
            ModelConfig::Ct(c) => Ok(c),
            ModelConfig::Cnn(_) => Err(contract_err!("operation needs a CT backbone")),
        }
    }

    fn ct_bound(&self, tape: &mut Tape) -> Result<CtVars> {
        match self.bind(tape, false).net {
            BoundVars::Ct(v) => Ok(v),
            BoundVars::Cnn(_) => Err(contract_err!("operation needs a CT backbone")),
        }
    }

    /// Token sequence `l×p` of a pair.
    pub fn tokenize(&self, pair: &PairTensor) -> Result<Tensor> {
        self.ct()?;
        if pair.size() != self.input_size() {
            return Err(crate::error::config_err!("pair size does not match the model"));
        }
        let mut tape = Tape::new();
        let v = self.ct_bound(&mut tape)?;
        let (l, s) = pair.split();
        let l = tape.constant(l);
        let s = tape.constant(s);
        let z = net::tokenize(&mut tape, &v, l, s)?;
        Ok(tape.value(z).clone())
    }

    /// Encoder output for tokens `z0` (`l×p`).
    pub fn encode(&self, z0: &Tensor) -> Result<Tensor> {
        let c = self.ct()?;
        self.check_tokens(z0)?;
        let mut tape = Tape::new();
        let v = self.ct_bound(&mut tape)?;
        let z0 = tape.constant(z0.clone());
        let z = net::encode(&mut tape, c, &v, z0, None)?;
        Ok(tape.value(z).clone())
    }

    /// `(pooled [p], weights [l])` for an encoded sequence.
    pub fn seq_pool(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        self.ct()?;
        self.check_tokens(z)?;
        let mut tape = Tape::new();
        let v = self.ct_bound(&mut tape)?;
        let z = tape.constant(z.clone());
        let (pooled, w) = net::seq_pool(&mut tape, &v, z)?;
        let p = tape.value(pooled).len();
        let l = tape.value(w).len();
        Ok((
            tape.value(pooled).clone().reshape(&[p])?,
            tape.value(w).clone().reshape(&[l])?,
        ))
    }

    /// Score from encoder input tokens, bypassing the tokenizer.
    pub fn score_tokens(&self, z0: &Tensor) -> Result<f32> {
        let c = self.ct()?;
        self.check_finite()?;
        self.check_tokens(z0)?;
        let mut tape = Tape::new();
        let v = self.ct_bound(&mut tape)?;
        let z0 = tape.constant(z0.clone());
        let a = net::ct_from_tokens(&mut tape, c, &v, z0, None)?;
        Ok(tape.value(a).item())
    }

    fn check_tokens(&self, z: &Tensor) -> Result<()> {
        let p = self.ct()?.embed_dim;
        match z.shape() {
            &[_, q] if q == p => Ok(()),
            s => Err(contract_err!("token sequence must be l×{p}, got {s:?}")),
        }
    }

    /// Similarity `α` of one pair.
    pub fn score(&self, pair: &PairTensor) -> Result<f32> {
        Ok(self.score_batch(std::slice::from_ref(pair))?[0])
    }

    /// Energy `−α` of one pair.
    pub fn energy(&self, pair: &PairTensor) -> Result<f32> {
        Ok(-self.score(pair)?)
    }

    /// Scores `A` of a candidate set, in order.
    pub fn score_batch(&self, pairs: &[PairTensor]) -> Result<Vec<f32>> {
        if pairs.is_empty() {
            return Err(contract_err!("score_batch needs at least one pair"));
        }
        self.check_finite()?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let base = tape.len();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            let a = self.forward(&mut tape, &bound, p, None)?;
            out.push(tape.value(a).item());
            tape.rewind(base);
        }
        Ok(out)
    }

    /// Writes the checkpoint to `path` and its JSON sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.named_tensors())?;
        let meta = ModelMeta {
            config: self.config.clone(),
            confidence_floor: self.confidence_floor,
        };
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let bytes = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let meta: ModelMeta = serde_json::from_slice(&bytes)?;
        let mut model = Self::from_tensors(meta.config, load_checkpoint(path)?)?;
        model.confidence_floor = meta.confidence_floor;
        Ok(model)
    }
}

/// `model.ckpt` → `model.ckpt.json`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
