//! Forward passes on a [`Tape`].

use super::config::{Activation, CnnConfig, CtConfig};
use crate::error::Result;
use crate::numerics::{multi_head_attention, AttentionParams, Padding, Tape, Tensor, Var};
use rand::{Rng, RngCore};

pub(crate) struct EncoderLayerVars {
    ln1: (Var, Var),
    attn: AttentionParams,
    ln2: (Var, Var),
    ff1: (Var, Var),
    ff2: (Var, Var),
}

pub(crate) struct CtVars {
    pub conv1_lidar: Var,
    pub conv1_sat: Var,
    pub conv1_bias: Var,
    conv2: (Var, Var),
    layers: Vec<EncoderLayerVars>,
    norm: (Var, Var),
    pool_u: Var,
    head: Vec<(Var, Var)>,
}

pub(crate) struct CnnVars {
    down: Vec<(Var, Var)>,
    res: Vec<[(Var, Var); 2]>,
}

pub(crate) enum BoundVars {
    Ct(CtVars),
    Cnn(CnnVars),
}

fn pair(it: &mut impl Iterator<Item = Var>) -> (Var, Var) {
    (it.next().unwrap(), it.next().unwrap())
}

impl CtVars {
    /// Consumes vars in the order of `param_specs`.
    pub fn from_iter(c: &CtConfig, it: &mut impl Iterator<Item = Var>) -> Self {
        let conv1_lidar = it.next().unwrap();
        let conv1_sat = it.next().unwrap();
        let conv1_bias = it.next().unwrap();
        let conv2 = pair(it);
        let layers = (0..c.encoder_layers)
            .map(|_| {
                let ln1 = pair(it);
                let (wq, bq) = pair(it);
                let (wk, bk) = pair(it);
                let (wv, bv) = pair(it);
                let (wo, bo) = pair(it);
                EncoderLayerVars {
                    ln1,
                    attn: AttentionParams {
                        wq,
                        bq,
                        wk,
                        bk,
                        wv,
                        bv,
                        wo,
                        bo,
                    },
                    ln2: pair(it),
                    ff1: pair(it),
                    ff2: pair(it),
                }
            })
            .collect();
        let norm = pair(it);
        let pool_u = it.next().unwrap();
        let head = (0..=c.mlp_head.len()).map(|_| pair(it)).collect();
        CtVars {
            conv1_lidar,
            conv1_sat,
            conv1_bias,
            conv2,
            layers,
            norm,
            pool_u,
            head,
        }
    }
}

impl CnnVars {
    pub fn from_iter(c: &CnnConfig, it: &mut impl Iterator<Item = Var>) -> Self {
        CnnVars {
            down: (0..3).map(|_| pair(it)).collect(),
            res: (0..c.res_blocks).map(|_| [pair(it), pair(it)]).collect(),
        }
    }
}

fn dropout(tape: &mut Tape, x: Var, rate: f32, rng: &mut Option<&mut dyn RngCore>) -> Var {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let mask: Vec<f32> = (0..tape.value(x).len())
                .map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            let mask = Tensor::new(tape.shape(x), mask).unwrap();
            tape.mul_const(x, &mask).unwrap()
        }
        _ => x,
    }
}

/// First tokenizer stage after the convolution: ReLU and pooling of the
/// summed lidar and satellite responses.
pub(crate) fn stage1_tail(tape: &mut Tape, lidar_part: Var, sat_part: Var) -> Result<Var> {
    let sum = tape.add(lidar_part, sat_part)?;
    let act = tape.relu(sum);
    tape.maxpool2d(act)
}

/// Tokens `l×p` from a lidar `d×d×1` and satellite `d×d×3` input. The first
/// convolution runs separately over the two channel groups and sums them.
pub(crate) fn tokenize(tape: &mut Tape, v: &CtVars, lidar: Var, sat: Var) -> Result<Var> {
    let l = tape.conv2d(lidar, v.conv1_lidar, Some(v.conv1_bias), 1, Padding::Same)?;
    let s = tape.conv2d(sat, v.conv1_sat, None, 1, Padding::Same)?;
    let pooled = stage1_tail(tape, l, s)?;
    tokenize_rest(tape, v, pooled)
}

/// Second tokenizer stage from the pooled first-stage map.
pub(crate) fn tokenize_rest(tape: &mut Tape, v: &CtVars, pooled: Var) -> Result<Var> {
    let c2 = tape.conv2d(pooled, v.conv2.0, Some(v.conv2.1), 1, Padding::Same)?;
    let a2 = tape.relu(c2);
    let z = tape.maxpool2d(a2)?;
    let (h0, w0, p) = match tape.shape(z) {
        &[h, w, p] => (h, w, p),
        _ => unreachable!(),
    };
    tape.reshape(z, &[h0 * w0, p])
}

/// Pre-norm transformer encoder with a final layer norm; no positional terms.
pub(crate) fn encode(
    tape: &mut Tape,
    c: &CtConfig,
    v: &CtVars,
    mut z: Var,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let eps = c.layer_norm_eps;
    for layer in &v.layers {
        let n1 = tape.layer_norm(z, layer.ln1.0, layer.ln1.1, eps)?;
        let a = multi_head_attention(tape, n1, &layer.attn, c.heads)?;
        let a = dropout(tape, a, c.dropout, &mut rng);
        z = tape.add(z, a)?;
        let n2 = tape.layer_norm(z, layer.ln2.0, layer.ln2.1, eps)?;
        let h = tape.matmul(n2, layer.ff1.0)?;
        let h = tape.add_bias(h, layer.ff1.1)?;
        let h = match c.activation {
            Activation::Gelu => tape.gelu(h),
            Activation::Relu => tape.relu(h),
        };
        let f = tape.matmul(h, layer.ff2.0)?;
        let f = tape.add_bias(f, layer.ff2.1)?;
        let f = dropout(tape, f, c.dropout, &mut rng);
        z = tape.add(z, f)?;
    }
    tape.layer_norm(z, v.norm.0, v.norm.1, eps)
}

/// Softmax-weighted token average; returns `(pooled [1×p], weights [1×l])`.
pub(crate) fn seq_pool(tape: &mut Tape, v: &CtVars, z: Var) -> Result<(Var, Var)> {
    let l = tape.shape(z)[0];
    let logits = tape.matmul(z, v.pool_u)?;
    let logits = tape.reshape(logits, &[1, l])?;
    let w = tape.softmax(logits)?;
    Ok((tape.matmul(w, z)?, w))
}

pub(crate) fn head(tape: &mut Tape, v: &CtVars, mut x: Var) -> Result<Var> {
    let last = v.head.len() - 1;
    for (i, &(w, b)) in v.head.iter().enumerate() {
        x = tape.matmul(x, w)?;
        x = tape.add_bias(x, b)?;
        if i < last {
            x = tape.relu(x);
        }
    }
    tape.reshape(x, &[1])
}

/// Scalar score from encoder input tokens.
pub(crate) fn ct_from_tokens(
    tape: &mut Tape,
    c: &CtConfig,
    v: &CtVars,
    z0: Var,
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let z = encode(tape, c, v, z0, rng)?;
    let (pooled, _) = seq_pool(tape, v, z)?;
    head(tape, v, pooled)
}

pub(crate) fn cnn_forward(tape: &mut Tape, v: &CnnVars, input: Var) -> Result<Var> {
    let x = cnn_features(tape, v, input)?;
    Ok(tape.mean(x))
}

/// Feature map before the global mean.
pub(crate) fn cnn_features(tape: &mut Tape, v: &CnnVars, input: Var) -> Result<Var> {
    let mut x = input;
    for &(w, b) in &v.down {
        let y = tape.conv2d(x, w, Some(b), 2, Padding::Same)?;
        x = tape.relu(y);
    }
    for [(w1, b1), (w2, b2)] in &v.res {
        let y = tape.conv2d(x, *w1, Some(*b1), 1, Padding::Same)?;
        let y = tape.relu(y);
        let y = tape.conv2d(y, *w2, Some(*b2), 1, Padding::Same)?;
        let sum = tape.add(x, y)?;
        x = tape.relu(sum);
    }
    Ok(x)
}
