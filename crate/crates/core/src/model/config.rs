use crate::error::{config_err, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

/// One tokenizer stage: same-padded stride-1 conv, ReLU, 2×2 max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub kernel: usize,
    pub channels: usize,
}

/// Convolutional-transformer energy function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtConfig {
    /// Side length of the square input pair.
    pub input_size: usize,
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub heads: usize,
    /// Feed-forward hidden width as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
    pub tokenizer: [ConvStage; 2],
    /// Hidden widths of the scoring head; the last layer maps to one output.
    pub mlp_head: Vec<usize>,
    pub activation: Activation,
    pub dropout: f32,
    pub layer_norm_eps: f32,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig {
            input_size: 64,
            embed_dim: 16,
            encoder_layers: 1,
            heads: 2,
            mlp_ratio: 2,
            tokenizer: [
                ConvStage {
                    kernel: 3,
                    channels: 8,
                },
                ConvStage {
                    kernel: 3,
                    channels: 16,
                },
            ],
            mlp_head: vec![16],
            activation: Activation::Gelu,
            dropout: 0.0,
            layer_norm_eps: 1e-5,
        }
    }
}

impl CtConfig {
    /// The wider preset: `p = 128`, four encoder layers, four heads, 64-wide
    /// tokenizer and head.
    pub fn wide() -> Self {
        CtConfig {
            embed_dim: 128,
            encoder_layers: 4,
            heads: 4,
            tokenizer: [
                ConvStage {
                    kernel: 3,
                    channels: 64,
                },
                ConvStage {
                    kernel: 3,
                    channels: 128,
                },
            ],
            mlp_head: vec![64],
            ..Self::default()
        }
    }

    /// Sequence length after tokenization.
    pub fn tokens(&self) -> usize {
        (self.input_size / 4).pow(2)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.embed_dim;
        if self.encoder_layers == 0 {
            return Err(config_err!("encoder_layers must be at least 1"));
        }
        if self.heads == 0 || p % self.heads != 0 {
            return Err(config_err!(
                "embed_dim {p} is not divisible by {} heads",
                self.heads
            ));
        }
        if p < 2 {
            return Err(config_err!("embed_dim must be at least 2"));
        }
        if self.tokenizer[1].channels != p {
            return Err(config_err!(
                "tokenizer stage 2 has {} channels, embed_dim is {p}",
                self.tokenizer[1].channels
            ));
        }
        if self.tokenizer.iter().any(|s| s.kernel % 2 == 0 || s.channels == 0) {
            return Err(config_err!("tokenizer kernels must be odd and channels positive"));
        }
        if self.input_size == 0 || self.input_size % 4 != 0 {
            return Err(config_err!(
                "input_size {} must be a positive multiple of 4",
                self.input_size
            ));
        }
        if self.mlp_ratio == 0 || self.mlp_head.contains(&0) {
            return Err(config_err!("mlp widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Convolutional baseline: three stride-2 convs, residual blocks, global mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub input_size: usize,
    pub channels: [usize; 3],
    pub res_blocks: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_size: 64,
            channels: [16, 32, 32],
            res_blocks: 6,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 8 != 0 {
            return Err(config_err!(
                "input_size {} must be a positive multiple of 8",
                self.input_size
            ));
        }
        if self.channels.contains(&0) {
            return Err(config_err!("channel counts must be positive"));
        }
        Ok(())
    }
}

/// Backbone choice with its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backbone", content = "config", rename_all = "lowercase")]
pub enum ModelConfig {
    Ct(CtConfig),
    Cnn(CnnConfig),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Ct(CtConfig::default())
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Ct(c) => c.validate(),
            ModelConfig::Cnn(c) => c.validate(),
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            ModelConfig::Ct(c) => c.input_size,
            ModelConfig::Cnn(c) => c.input_size,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    Zeros,
    Ones,
    /// Truncated normal with std 0.02.
    Projection,
    /// He normal with the given fan-in.
    Kaiming(usize),
}

pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(out: &mut Vec<ParamSpec>, name: impl Into<String>, shape: &[usize], init: Init) {
    out.push(ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    });
}

/// Every learnable tensor in forward order.
pub(crate) fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut v = Vec::new();
    match config {
        ModelConfig::Ct(c) => {
            let [s1, s2] = c.tokenizer;
            let fan1 = s1.kernel * s1.kernel * 4;
            spec(&mut v, "tokenizer.conv1.lidar", &[s1.kernel, s1.kernel, 1, s1.channels], Init::Kaiming(fan1));
            spec(&mut v, "tokenizer.conv1.sat", &[s1.kernel, s1.kernel, 3, s1.channels], Init::Kaiming(fan1));
            spec(&mut v, "tokenizer.conv1.bias", &[s1.channels], Init::Zeros);
            let fan2 = s2.kernel * s2.kernel * s1.channels;
            spec(&mut v, "tokenizer.conv2.weight", &[s2.kernel, s2.kernel, s1.channels, s2.channels], Init::Kaiming(fan2));
            spec(&mut v, "tokenizer.conv2.bias", &[s2.channels], Init::Zeros);
            let p = c.embed_dim;
            let hidden = p * c.mlp_ratio;
            for l in 0..c.encoder_layers {
                let n = |s: &str| format!("encoder.{l}.{s}");
                spec(&mut v, n("ln1.gain"), &[p], Init::Ones);
                spec(&mut v, n("ln1.bias"), &[p], Init::Zeros);
                for proj in ["q", "k", "v", "o"] {
                    spec(&mut v, n(&format!("attn.w{proj}")), &[p, p], Init::Projection);
                    spec(&mut v, n(&format!("attn.b{proj}")), &[p], Init::Zeros);
                }
                spec(&mut v, n("ln2.gain"), &[p], Init::Ones);
                spec(&mut v, n("ln2.bias"), &[p], Init::Zeros);
                spec(&mut v, n("ff1.weight"), &[p, hidden], Init::Projection);
                spec(&mut v, n("ff1.bias"), &[hidden], Init::Zeros);
                spec(&mut v, n("ff2.weight"), &[hidden, p], Init::Projection);
                spec(&mut v, n("ff2.bias"), &[p], Init::Zeros);
            }
            spec(&mut v, "encoder.norm.gain", &[p], Init::Ones);
            spec(&mut v, "encoder.norm.bias", &[p], Init::Zeros);
            spec(&mut v, "pool.u", &[p, 1], Init::Projection);
            let mut width = p;
            for (i, &h) in c.mlp_head.iter().chain(std::iter::once(&1)).enumerate() {
                spec(&mut v, format!("head.{i}.weight"), &[width, h], Init::Projection);
                spec(&mut v, format!("head.{i}.bias"), &[h], Init::Zeros);
                width = h;
            }
        }
        ModelConfig::Cnn(c) => {
            let mut cin = 4;
            for (i, &co) in c.channels.iter().enumerate() {
                spec(&mut v, format!("down.{i}.weight"), &[3, 3, cin, co], Init::Kaiming(9 * cin));
                spec(&mut v, format!("down.{i}.bias"), &[co], Init::Zeros);
                cin = co;
            }
            for b in 0..c.res_blocks {
                for j in 1..=2 {
                    spec(&mut v, format!("res.{b}.conv{j}.weight"), &[3, 3, cin, cin], Init::Kaiming(9 * cin));
                    spec(&mut v, format!("res.{b}.conv{j}.bias"), &[cin], Init::Zeros);
                }
            }
        }
    }
    v
}
