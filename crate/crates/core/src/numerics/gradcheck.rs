//! Central finite differences, independent of the tape's backward pass.

use super::Tensor;

/// Numerical gradient of `f` at `x`: `(f(x + h·e_i) − f(x − h·e_i)) / 2h`
/// for every coordinate `i`.
pub fn numeric_gradient(x: &Tensor, h: f32, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = x.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            // the perturbation actually applied after f32 rounding
            let step = (orig + h) as f64 - (orig - h) as f64;
            (up - down) / step
        })
        .collect()
}

/// Central differences that back off near kinks. Where the forward and
/// backward one-sided quotients disagree, a ReLU or max-pool switch lies
/// within `h` of `x` and the central quotient mixes both sides. The step is
/// then divided by 8 until the two sides agree or it falls below `h_min`.
pub fn numeric_gradient_kinked(x: &Tensor, h: f32, h_min: f32, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let f0 = f(x);
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = x.data()[i];
            let mut step = h;
            loop {
                probe.data_mut()[i] = orig + step;
                let up = f(&probe);
                probe.data_mut()[i] = orig - step;
                let down = f(&probe);
                probe.data_mut()[i] = orig;
                let (hi, lo) = ((orig + step) as f64 - orig as f64, orig as f64 - (orig - step) as f64);
                let (fwd, bwd) = ((up - f0) / hi, (f0 - down) / lo);
                let central = (up - down) / (hi + lo);
                let agree = (fwd - bwd).abs() <= 0.05 * fwd.abs().max(bwd.abs()).max(0.05);
                if agree || step / 8.0 < h_min {
                    break central;
                }
                step /= 8.0;
            }
        })
        .collect()
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, 1e-3)`.
pub fn relative_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let a = a as f64;
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-3)
}
