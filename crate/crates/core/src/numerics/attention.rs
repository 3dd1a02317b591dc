use super::kernels::{self, View};
use super::{Tape, Tensor, Var};
use crate::error::{config_err, shape_err, Result};

/// Projection weights of one multi-head self-attention block, all `p×p`
/// matrices with length-`p` biases.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product self-attention over the rows of `x` (`l×p`), split into
/// `heads` heads of width `p / heads`, concatenated and output-projected.
pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    params: &AttentionParams,
    heads: usize,
) -> Result<Var> {
    let p = match tape.shape(x) {
        &[_, p] => p,
        s => return Err(shape_err!("attention input must be l×p, got {s:?}")),
    };
    if heads == 0 || p % heads != 0 {
        return Err(config_err!("embedding width {p} not divisible by {heads} heads"));
    }
    let dh = p / heads;
    let vars = [x, params.wq, params.bq, params.wk, params.bk, params.wv, params.bv, params.wo, params.bo];
    if !vars.iter().any(|&v| tape.requires_grad(v)) {
        let y = attention_values(tape, x, params, heads)?;
        return Ok(tape.leaf(y, false));
    }
    let project = |tape: &mut Tape, w: Var, b: Var| -> Result<Var> {
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    };
    let q = project(tape, params.wq, params.bq)?;
    let k = project(tape, params.wk, params.bk)?;
    let v = project(tape, params.wv, params.bv)?;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * dh, dh)?,
                tape.slice_cols(k, h * dh, dh)?,
                tape.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = tape.matmul_nt(qh, kh, scale)?;
        let weights = tape.softmax(scores)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    let joined = if heads == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    let y = tape.matmul(joined, params.wo)?;
    tape.add_bias(y, params.bo)
}

/// Same computation without recording: head slices are strided views and
/// the score matrix is reused across heads.
fn attention_values(tape: &Tape, x: Var, params: &AttentionParams, heads: usize) -> Result<Tensor> {
    let (l, p) = match tape.shape(x) {
        &[l, p] => (l, p),
        _ => unreachable!(),
    };
    let dh = p / heads;
    let xv = tape.value(x).data();
    let project = |w: Var, b: Var| -> Result<Vec<f32>> {
        if tape.shape(w) != [p, p] || tape.shape(b) != [p] {
            return Err(shape_err!(
                "attention projection {:?} + {:?} for width {p}",
                tape.shape(w),
                tape.shape(b)
            ));
        }
        let mut y = kernels::gemm_new(l, p, p, 1.0, xv, false, tape.value(w).data(), false);
        add_rows(&mut y, tape.value(b).data());
        Ok(y)
    };
    let q = project(params.wq, params.bq)?;
    let k = project(params.wk, params.bk)?;
    let v = project(params.wv, params.bv)?;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut scores = vec![0.0; l * l];
    let mut joined = vec![0.0; l * p];
    for h in 0..heads {
        let head = View { offset: h * dh, rs: p, cs: 1 };
        let head_t = View { offset: h * dh, rs: 1, cs: p };
        kernels::gemm_view(l, dh, l, scale, &q, head, &k, head_t, &mut scores, View::dense(l));
        kernels::softmax_rows_in_place(&mut scores, l);
        kernels::gemm_view(l, l, dh, 1.0, &scores, View::dense(l), &v, head, &mut joined, head);
    }
    if tape.shape(params.wo) != [p, p] || tape.shape(params.bo) != [p] {
        return Err(shape_err!("attention output projection {:?}", tape.shape(params.wo)));
    }
    let mut y = kernels::gemm_new(l, p, p, 1.0, &joined, false, tape.value(params.wo).data(), false);
    add_rows(&mut y, tape.value(params.bo).data());
    Tensor::new(&[l, p], y)
}

fn add_rows(y: &mut [f32], b: &[f32]) {
    for row in y.chunks_exact_mut(b.len()) {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
}
