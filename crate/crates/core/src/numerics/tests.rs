use super::gradcheck::{numeric_gradient, relative_error};
use super::*;
use crate::error::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn forward1(x: &Tensor, f: impl Fn(&mut Tape, Var) -> Var) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let y = f(&mut tape, v);
    tape.value(y).clone()
}

#[test]
fn matmul_examples() {
    let a = t(&[2, 2], &[1., 2., 3., 4.]);
    let eye = t(&[2, 2], &[1., 0., 0., 1.]);
    let b = t(&[2, 2], &[5., 6., 7., 8.]);
    let mut tape = Tape::new();
    let (va, ve, vb) = (
        tape.constant(a.clone()),
        tape.constant(eye),
        tape.constant(b),
    );
    let r1 = tape.matmul(va, ve).unwrap();
    assert_eq!(tape.value(r1), &a);
    let r2 = tape.matmul(va, vb).unwrap();
    assert_eq!(tape.value(r2).data(), &[19., 22., 43., 50.]);

    let z = tape.constant(Tensor::zeros(&[2, 3]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let any = tape.constant(Tensor::uniform(&[3, 4], -5.0, 5.0, &mut rng));
    let r3 = tape.matmul(z, any).unwrap();
    assert_eq!(tape.value(r3), &Tensor::zeros(&[2, 4]));

    let bad = tape.constant(Tensor::zeros(&[3, 3]));
    assert!(matches!(tape.matmul(va, bad), Err(Error::Shape(_))));
}

#[test]
fn conv2d_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = Tensor::uniform(&[5, 6, 1], 0.0, 1.0, &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(img.clone());
    let k1 = tape.constant(Tensor::ones(&[1, 1, 1, 1]));
    let y = tape.conv2d(x, k1, None, 1, Padding::Same).unwrap();
    assert_eq!(tape.value(y).data(), img.data());

    let ones = tape.constant(Tensor::ones(&[4, 4, 1]));
    let k3 = tape.constant(Tensor::ones(&[3, 3, 1, 1]));
    let y = tape.conv2d(ones, k3, None, 1, Padding::Valid).unwrap();
    assert_eq!(tape.shape(y), &[2, 2, 1]);
    assert!(tape.value(y).data().iter().all(|&v| v == 9.0));

    let x3 = tape.constant(Tensor::uniform(&[6, 6, 3], -1.0, 1.0, &mut rng));
    let kz = tape.constant(Tensor::zeros(&[3, 3, 3, 2]));
    let y = tape.conv2d(x3, kz, None, 1, Padding::Same).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));

    let big = tape.constant(Tensor::ones(&[5, 5, 1, 1]));
    let small = tape.constant(Tensor::ones(&[3, 3, 1]));
    assert!(matches!(
        tape.conv2d(small, big, None, 1, Padding::Valid),
        Err(Error::Shape(_))
    ));
}

#[test]
fn conv2d_output_size_follows_floor_rule() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::ones(&[64, 64, 4]));
    let k = tape.constant(Tensor::ones(&[3, 3, 4, 2]));
    let y = tape.conv2d(x, k, None, 2, Padding::Same).unwrap();
    assert_eq!(tape.shape(y), &[32, 32, 2]);
    let y = tape.conv2d(x, k, None, 3, Padding::Valid).unwrap();
    assert_eq!(tape.shape(y), &[21, 21, 2]); // floor((64 - 3) / 3) + 1
}

#[test]
fn maxpool_examples() {
    let y = forward1(&t(&[2, 2, 1], &[1., 2., 3., 4.]), |tp, v| {
        tp.maxpool2d(v).unwrap()
    });
    assert_eq!(y.data(), &[4.]);
    let y = forward1(&Tensor::full(&[4, 6, 2], 0.7), |tp, v| tp.maxpool2d(v).unwrap());
    assert_eq!(y.shape(), &[2, 3, 2]);
    assert!(y.data().iter().all(|&v| v == 0.7));

    let mut tape = Tape::new();
    let odd = tape.constant(Tensor::ones(&[3, 4, 1]));
    assert!(matches!(tape.maxpool2d(odd), Err(Error::Shape(_))));
}

#[test]
fn maxpool_gradient_routes_to_first_argmax() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2, 4, 1], &[1., 5., 2., 2., 5., 0., 2., 1.]));
    let y = tape.maxpool2d(x).unwrap();
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    // window 1 ties at flat indices 1 and 4 → first wins; window 2 ties 2,3,6
    assert_eq!(g.get(x).unwrap().data(), &[0., 1., 1., 0., 0., 0., 0., 0.]);
}

#[test]
fn softmax_examples() {
    let y = forward1(&Tensor::zeros(&[4]), |tp, v| tp.softmax(v).unwrap());
    assert_eq!(y.data(), &[0.25; 4]);
    let y = forward1(&t(&[3], &[1., 2., 3.]), |tp, v| tp.softmax(v).unwrap());
    for (a, b) in y.data().iter().zip([0.09003, 0.24473, 0.66524]) {
        assert!((a - b).abs() < 1e-4);
    }
    let x = t(&[5], &[0.3, -1.2, 4.0, 2.2, 0.0]);
    let shifted = t(&[5], &[100.3, 98.8, 104.0, 102.2, 100.0]);
    let a = forward1(&x, |tp, v| tp.softmax(v).unwrap());
    let b = forward1(&shifted, |tp, v| tp.softmax(v).unwrap());
    for (p, q) in a.data().iter().zip(b.data()) {
        assert!((p - q).abs() < 1e-6);
    }
}

#[test]
fn layer_norm_examples() {
    let ln = |x: &Tensor, eps: f32| {
        let p = x.shape()[1];
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let g = tape.constant(Tensor::ones(&[p]));
        let b = tape.constant(Tensor::zeros(&[p]));
        let y = tape.layer_norm(v, g, b, eps).unwrap();
        tape.value(y).clone()
    };
    let y = ln(&Tensor::full(&[2, 5], 3.3), 1e-5);
    assert!(y.data().iter().all(|&v| v == 0.0));
    let y = ln(&t(&[1, 2], &[1., 3.]), 1e-12);
    assert!((y.data()[0] + 1.0).abs() < 1e-6 && (y.data()[1] - 1.0).abs() < 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::uniform(&[20, 16], -4.0, 9.0, &mut rng);
    let y = ln(&x, 1e-5);
    for row in y.data().chunks(16) {
        let mean = row.iter().sum::<f32>() / 16.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / 16.0;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-3);
    }

    let mut tape = Tape::new();
    let v = tape.constant(Tensor::ones(&[3, 1]));
    let g = tape.constant(Tensor::ones(&[1]));
    let b = tape.constant(Tensor::zeros(&[1]));
    assert!(matches!(tape.layer_norm(v, g, b, 1e-5), Err(Error::Shape(_))));
}

fn identity_attention(tape: &mut Tape, p: usize) -> AttentionParams {
    let mut eye = Tensor::zeros(&[p, p]);
    for i in 0..p {
        eye.data_mut()[i * p + i] = 1.0;
    }
    let mut mk = |t: Tensor| tape.constant(t);
    AttentionParams {
        wq: mk(eye.clone()),
        bq: mk(Tensor::zeros(&[p])),
        wk: mk(eye.clone()),
        bk: mk(Tensor::zeros(&[p])),
        wv: mk(eye.clone()),
        bv: mk(Tensor::zeros(&[p])),
        wo: mk(eye),
        bo: mk(Tensor::zeros(&[p])),
    }
}

#[test]
fn attention_over_one_token_is_identity() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 4], &[0.3, -2.0, 1.5, 0.0]));
    let params = identity_attention(&mut tape, 4);
    let y = multi_head_attention(&mut tape, x, &params, 2).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());
}

#[test]
fn attention_with_constant_keys_averages_values() {
    // zero key projection → every score equal → uniform weights
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = tape.constant(Tensor::uniform(&[5, 4], -1.0, 1.0, &mut rng));
    let mut params = identity_attention(&mut tape, 4);
    params.wk = tape.constant(Tensor::zeros(&[4, 4]));
    let y = multi_head_attention(&mut tape, x, &params, 2).unwrap();
    let xv = tape.value(x).data();
    for j in 0..4 {
        let mean = (0..5).map(|i| xv[i * 4 + j]).sum::<f32>() / 5.0;
        for i in 0..5 {
            assert!((tape.value(y).data()[i * 4 + j] - mean).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_preserves_shape_and_checks_heads() {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = tape.constant(Tensor::uniform(&[7, 6], -1.0, 1.0, &mut rng));
    let mut mk = |s: &[usize]| tape.constant(Tensor::trunc_normal(s, 0.3, &mut rng));
    let params = AttentionParams {
        wq: mk(&[6, 6]),
        bq: mk(&[6]),
        wk: mk(&[6, 6]),
        bk: mk(&[6]),
        wv: mk(&[6, 6]),
        bv: mk(&[6]),
        wo: mk(&[6, 6]),
        bo: mk(&[6]),
    };
    let y = multi_head_attention(&mut tape, x, &params, 3).unwrap();
    assert_eq!(tape.shape(y), &[7, 6]);
    assert!(matches!(
        multi_head_attention(&mut tape, x, &params, 4),
        Err(Error::Config(_))
    ));
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2, 3], &[1., -2., 3., 0., 5., 6.]));
    let s = tape.sum(x);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &Tensor::ones(&[2, 3]));

    let mut tape = Tape::new();
    let xv = t(&[4], &[1.0, 2.0, -1.0, 0.5]);
    let target = t(&[4], &[0.0, 2.0, 1.0, 0.25]);
    let x = tape.param(xv);
    let l = tape.l1_mean(x, &target).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.25, 0.0, -0.25, 0.25]);

    // non-scalar loss
    let mut tape = Tape::new();
    let x = tape.param(Tensor::ones(&[3]));
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::ones(&[2, 2]));
    let c = tape.constant(Tensor::ones(&[2, 2]));
    let y = tape.matmul(a, c).unwrap();
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    assert!(g.get(c).is_none());
    assert!(g.get(a).is_some());
}

// ---- finite-difference checks -------------------------------------------

/// Checks `d/dx Σ w ⊙ f(x)` against central differences for every input.
pub(crate) fn check_op(
    inputs: &[Tensor],
    build: &dyn Fn(&mut Tape, &[Var]) -> Var,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |xs: &[Tensor]| -> Tensor {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let y = build(&mut tape, &vars);
        tape.value(y).clone()
    };
    let out_shape = eval(inputs).shape().to_vec();
    let w = Tensor::uniform(&out_shape, -1.0, 1.0, &mut rng);
    let weighted = |y: &Tensor| -> f64 {
        y.data()
            .iter()
            .zip(w.data())
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let y = build(&mut tape, &vars);
    let wy = tape.mul_const(y, &w).unwrap();
    let loss = tape.sum(wy);
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let numeric = numeric_gradient(&inputs[i], 1e-3, |probe| {
            let mut xs = inputs.to_vec();
            xs[i] = probe.clone();
            weighted(&eval(&xs))
        });
        let analytic = grads
            .get(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// Uniform values bounded away from zero (ReLU kink).
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f32 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn finite_difference_smoke() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Var>)> = vec![
        (
            "matmul",
            vec![rand_t(&mut rng, &[3, 4]), rand_t(&mut rng, &[4, 2])],
            Box::new(|tp, v| tp.matmul(v[0], v[1]).unwrap()),
        ),
        (
            "matmul_nt",
            vec![rand_t(&mut rng, &[3, 4]), rand_t(&mut rng, &[5, 4])],
            Box::new(|tp, v| tp.matmul_nt(v[0], v[1], 0.7).unwrap()),
        ),
        (
            "conv2d",
            vec![
                rand_t(&mut rng, &[5, 6, 2]),
                rand_t(&mut rng, &[3, 3, 2, 3]),
                rand_t(&mut rng, &[3]),
            ],
            Box::new(|tp, v| tp.conv2d(v[0], v[1], Some(v[2]), 2, Padding::Same).unwrap()),
        ),
        (
            "relu",
            vec![rand_away_from_zero(&mut rng, &[10])],
            Box::new(|tp, v| tp.relu(v[0])),
        ),
        (
            "gelu",
            vec![rand_t(&mut rng, &[10])],
            Box::new(|tp, v| tp.gelu(v[0])),
        ),
        (
            "softmax",
            vec![rand_t(&mut rng, &[3, 5])],
            Box::new(|tp, v| tp.softmax(v[0]).unwrap()),
        ),
        (
            "layer_norm",
            vec![
                rand_t(&mut rng, &[3, 6]),
                rand_t(&mut rng, &[6]),
                rand_t(&mut rng, &[6]),
            ],
            Box::new(|tp, v| tp.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()),
        ),
        (
            "l1_mean",
            vec![rand_t(&mut rng, &[8])],
            Box::new(|tp, v| {
                tp.l1_mean(v[0], &Tensor::full(&[8], 0.013)).unwrap()
            }),
        ),
    ];
    for (name, inputs, build) in &cases {
        let err = check_op(inputs, build.as_ref(), 99);
        assert!(err < 1e-2, "{name}: relative error {err}");
    }
}

#[test]
fn attention_inference_path_matches_recorded_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (l, p, heads) in [(3, 4, 2), (1, 2, 1), (5, 8, 2), (4, 6, 3)] {
        let inputs: Vec<Tensor> = std::iter::once(rand_t(&mut rng, &[l, p]))
            .chain((0..4).flat_map(|_| [rand_t(&mut rng, &[p, p]), rand_t(&mut rng, &[p])]).collect::<Vec<_>>())
            .collect();
        let run = |grad: bool| {
            let mut tape = Tape::new();
            let v: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), grad)).collect();
            let params = AttentionParams {
                wq: v[1],
                bq: v[2],
                wk: v[3],
                bk: v[4],
                wv: v[5],
                bv: v[6],
                wo: v[7],
                bo: v[8],
            };
            let y = multi_head_attention(&mut tape, v[0], &params, heads).unwrap();
            tape.value(y).clone()
        };
        let (a, b) = (run(true), run(false));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6, "l={l} p={p} heads={heads}: {x} vs {y}");
        }
    }
}

