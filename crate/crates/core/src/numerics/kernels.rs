//! Raw forward/backward kernels over row-major slices. Images are HWC.

/// `c = op(a) · op(b)` (or `c += ...` when `accumulate`), with `op(a)` of
/// shape `m×k` and `op(b)` of shape `k×n`. A transposed operand is stored in
/// its untransposed row-major layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: strides describe in-bounds layouts of the checked slice lengths.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row/column strides of an `rows×cols` view into a slice.
#[derive(Clone, Copy, Debug)]
pub(crate) struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn dense(cols: usize) -> Self {
        View { offset: 0, rs: cols, cs: 1 }
    }

    fn end(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs + 1
    }
}

/// `C = alpha · A·B` over strided views, overwriting the `m×n` view of `c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_view(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    va: View,
    b: &[f32],
    vb: View,
    c: &mut [f32],
    vc: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k > 0 && va.end(m, k) <= a.len() && vb.end(k, n) <= b.len() && vc.end(m, n) <= c.len());
    // SAFETY: the asserts keep every view in bounds; beta = 0 never reads C
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(va.offset),
            va.rs as isize,
            va.cs as isize,
            b.as_ptr().add(vb.offset),
            vb.rs as isize,
            vb.cs as isize,
            0.0,
            c.as_mut_ptr().add(vc.offset),
            vc.rs as isize,
            vc.cs as isize,
        );
    }
}

/// `op(a) · op(b)` scaled by `alpha` into a fresh `m×n` buffer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_new(m: usize, k: usize, n: usize, alpha: f32, a: &[f32], a_trans: bool, b: &[f32], b_trans: bool) -> Vec<f32> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    let mut c = Vec::with_capacity(m * n);
    // SAFETY: with beta = 0 sgemm writes every element of C without reading it
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
        c.set_len(m * n);
    }
    c
}

/// Geometry of a 2-D convolution over an HWC image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.cin
    }
}

/// Fills one im2col row (the receptive field of output pixel `(oy, ox)`).
#[inline]
pub(crate) fn im2col_row(g: &ConvGeom, input: &[f32], oy: usize, ox: usize, row: &mut [f32]) {
    let span = g.k * g.cin;
    let x0 = (ox * g.stride) as isize - g.pad as isize;
    let lo = x0.max(0);
    let hi = (x0 + g.k as isize).min(g.w as isize);
    for ky in 0..g.k {
        let dst = &mut row[ky * span..(ky + 1) * span];
        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
        if iy < 0 || iy >= g.h as isize || hi <= lo {
            dst.fill(0.0);
            continue;
        }
        let before = (lo - x0) as usize * g.cin;
        let len = (hi - lo) as usize * g.cin;
        let src = (iy as usize * g.w + lo as usize) * g.cin;
        dst[..before].fill(0.0);
        dst[before..before + len].copy_from_slice(&input[src..src + len]);
        dst[before + len..].fill(0.0);
    }
}

pub(crate) fn im2col(g: &ConvGeom, input: &[f32]) -> Vec<f32> {
    let pl = g.patch_len();
    let mut cols = Vec::with_capacity(g.oh * g.ow * pl);
    let mut row = vec![0.0; pl];
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            im2col_row(g, input, oy, ox, &mut row);
            cols.extend_from_slice(&row);
        }
    }
    cols
}

/// Scatter-adds column gradients back onto the input image.
pub(crate) fn col2im_add(g: &ConvGeom, dcols: &[f32], dinput: &mut [f32]) {
    let pl = g.patch_len();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let row = &dcols[(oy * g.ow + ox) * pl..][..pl];
            let mut idx = 0;
            for ky in 0..g.k {
                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                for kx in 0..g.k {
                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                    if iy >= 0 && ix >= 0 && iy < g.h as isize && ix < g.w as isize {
                        let dst = (iy as usize * g.w + ix as usize) * g.cin;
                        for c in 0..g.cin {
                            dinput[dst + c] += row[idx + c];
                        }
                    }
                    idx += g.cin;
                }
            }
        }
    }
}

/// `out[p, :] = cols[p, :] · kernel + bias` for every output pixel `p`.
pub(crate) fn conv_from_cols(
    g: &ConvGeom,
    cols: &[f32],
    rows: usize,
    kernel: &[f32],
    bias: Option<&[f32]>,
) -> Vec<f32> {
    let mut out = gemm_new(rows, g.patch_len(), g.cout, 1.0, cols, false, kernel, false);
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(g.cout) {
            for (o, bv) in px.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling; returns output and the flat input index of each
/// window maximum (first occurrence in row-major order wins ties).
pub(crate) fn maxpool2(input: &[f32], h: usize, w: usize, c: usize) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut arg = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            let base = ((2 * oy) * w + 2 * ox) * c;
            let (b, r) = (base + c, base + w * c);
            let (s0, s1) = (&input[base..base + c], &input[b..b + c]);
            let (s2, s3) = (&input[r..r + c], &input[r + c..r + 2 * c]);
            for ch in 0..c {
                let (mut bv, mut best) = (s0[ch], base + ch);
                if s1[ch] > bv {
                    (bv, best) = (s1[ch], b + ch);
                }
                if s2[ch] > bv {
                    (bv, best) = (s2[ch], r + ch);
                }
                if s3[ch] > bv {
                    (bv, best) = (s3[ch], r + c + ch);
                }
                out.push(bv);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

/// `exp(x)` by range reduction to `[-ln2/2, ln2/2]` and a degree-6
/// polynomial; relative error below 2e-7 and branch-free so loops vectorize.
#[inline]
pub(crate) fn fast_exp(x: f32) -> f32 {
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    let x = x.clamp(-87.3, 88.7);
    let k = (x * std::f32::consts::LOG2_E + 0.5).floor();
    let r = x - k * LN2_HI - k * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    // k is integral and small, so adding 1.5·2^23 leaves it in the low mantissa bits
    let ki = (k + 12_582_912.0).to_bits().wrapping_sub(0x4B40_0000);
    p * f32::from_bits(ki.wrapping_add(127) << 23)
}

/// Sum with eight independent accumulators.
#[inline]
fn lane_sum(v: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = v.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for (a, x) in acc.iter_mut().zip(c) {
            *a += x;
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for x in rest {
        s += x;
    }
    s
}

#[inline]
fn lane_max(v: &[f32]) -> f32 {
    let mut acc = [f32::NEG_INFINITY; 8];
    let chunks = v.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for (a, &x) in acc.iter_mut().zip(c) {
            *a = if x > *a { x } else { *a };
        }
    }
    acc.iter().chain(rest).copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Numerically stable softmax over each contiguous row of length `n`.
pub(crate) fn softmax_rows(x: &[f32], n: usize) -> Vec<f32> {
    let mut out = x.to_vec();
    softmax_rows_in_place(&mut out, n);
    out
}

pub(crate) fn softmax_rows_in_place(x: &mut [f32], n: usize) {
    for row in x.chunks_exact_mut(n) {
        let max = lane_max(row);
        for v in row.iter_mut() {
            *v = fast_exp(*v - max);
        }
        let inv = 1.0 / lane_sum(row);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

pub(crate) fn softmax_rows_backward(y: &[f32], dy: &[f32], n: usize, dx: &mut [f32]) {
    for ((yr, dyr), dxr) in y
        .chunks_exact(n)
        .zip(dy.chunks_exact(n))
        .zip(dx.chunks_exact_mut(n))
    {
        let dot: f32 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for ((d, &yv), &g) in dxr.iter_mut().zip(yr).zip(dyr) {
            *d += yv * (g - dot);
        }
    }
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)
const GELU_A: f32 = 0.044_715;

#[inline]
fn fast_tanh(u: f32) -> f32 {
    1.0 - 2.0 / (1.0 + fast_exp(2.0 * u))
}

#[inline]
pub(crate) fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + fast_tanh(GELU_C * (x + GELU_A * x * x * x)))
}

#[inline]
pub(crate) fn gelu_grad(x: f32) -> f32 {
    let t = fast_tanh(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise layer normalization. Returns `(y, xhat, rstd)`.
pub(crate) fn layer_norm_rows(
    x: &[f32],
    p: usize,
    gain: &[f32],
    bias: &[f32],
    eps: f32,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let rows = x.len() / p;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let src = &x[r * p..(r + 1) * p];
        let mean = src.iter().sum::<f32>() / p as f32;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / p as f32;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..p {
            let h = (src[j] - mean) * rs;
            xhat[r * p + j] = h;
            y[r * p + j] = h * gain[j] + bias[j];
        }
    }
    (y, xhat, rstd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_tracks_libm() {
        let mut x = -87.0f32;
        while x < 88.0 {
            let (a, b) = (fast_exp(x), x.exp());
            assert!(((a - b) / b).abs() < 5e-7, "x={x}: {a} vs {b}");
            x += 0.0137;
        }
        assert_eq!(fast_exp(f32::NEG_INFINITY), fast_exp(-87.3));
        assert!(fast_exp(f32::NAN).is_nan());
        assert!((fast_tanh(0.3) - 0.3f32.tanh()).abs() < 1e-6);
        assert_eq!(fast_tanh(50.0), 1.0);
        assert_eq!(fast_tanh(-50.0), -1.0);
    }

    #[test]
    fn im2col_rows_match_naive_padding() {
        let g = ConvGeom { h: 5, w: 6, cin: 2, cout: 1, k: 3, stride: 2, pad: 1, oh: 3, ow: 3 };
        let input: Vec<f32> = (0..60).map(|v| v as f32 + 1.0).collect();
        let cols = im2col(&g, &input);
        for oy in 0..3 {
            for ox in 0..3 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        for c in 0..2 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            let want = if iy < 0 || ix < 0 || iy >= 5 || ix >= 6 {
                                0.0
                            } else {
                                input[(iy as usize * 6 + ix as usize) * 2 + c]
                            };
                            assert_eq!(cols[(oy * 3 + ox) * 18 + (ky * 3 + kx) * 2 + c], want);
                        }
                    }
                }
            }
        }
    }
}
