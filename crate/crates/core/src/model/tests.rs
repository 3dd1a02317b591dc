use super::net::{self, BoundVars};
use super::*;
use crate::data::{synth_world, BevImage, RgbImage};
use crate::inference::Scorer;
use crate::numerics::gradcheck::{numeric_gradient, relative_error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_ct(size: usize) -> CtConfig {
    CtConfig {
        input_size: size,
        embed_dim: 8,
        encoder_layers: 2,
        heads: 2,
        tokenizer: [
            ConvStage {
                kernel: 3,
                channels: 4,
            },
            ConvStage {
                kernel: 3,
                channels: 8,
            },
        ],
        mlp_head: vec![8],
        ..CtConfig::default()
    }
}

/// Model whose projections are large enough for every stage to matter.
fn lively(config: ModelConfig, seed: u64) -> EnergyModel {
    let mut r = rng(seed);
    let mut m = EnergyModel::new(config, &mut r).unwrap();
    for (name, t) in m.names.iter().zip(m.params.iter_mut()) {
        if name.contains("attn.w") || name.contains("ff") || name.contains("head") || name == "pool.u" {
            *t = Tensor::trunc_normal(t.shape(), 0.4, &mut r);
        } else if name.ends_with("bias") || name.ends_with("gain") {
            let noise = Tensor::uniform(t.shape(), -0.2, 0.2, &mut r);
            for (v, n) in t.data_mut().iter_mut().zip(noise.data()) {
                *v += n;
            }
        }
    }
    m
}

fn random_pair(size: usize, seed: u64) -> PairTensor {
    let t = Tensor::uniform(&[size, size, 4], 0.0, 1.0, &mut rng(seed));
    PairTensor::from_tensor(t).unwrap()
}

fn random_images(size: usize, seed: u64) -> (BevImage, RgbImage) {
    use rand::Rng;
    let mut r = rng(seed);
    let mut bev = BevImage::new(size);
    for _ in 0..size * 3 {
        bev.set(r.random_range(0..size), r.random_range(0..size), 255);
    }
    let mut tile = RgbImage::new(size, size);
    tile.as_raw_mut().iter_mut().for_each(|v| *v = r.random());
    (bev, tile)
}

#[test]
fn tokenizer_shapes() {
    let wide = EnergyModel::new(ModelConfig::Ct(CtConfig::wide()), &mut rng(0)).unwrap();
    assert_eq!(wide.tokenize(&random_pair(64, 1)).unwrap().shape(), [256, 128]);

    let mut c = CtConfig::wide();
    c.input_size = 32;
    c.embed_dim = 64;
    c.tokenizer[1].channels = 64;
    let m = EnergyModel::new(ModelConfig::Ct(c), &mut rng(0)).unwrap();
    let pair = random_pair(32, 2);
    let z = m.tokenize(&pair).unwrap();
    assert_eq!(z.shape(), [64, 64]);
    assert_eq!(m.tokenize(&pair).unwrap(), z);
    assert!(matches!(m.tokenize(&random_pair(64, 2)), Err(Error::Config(_))));
}

#[test]
fn config_validation() {
    let mut c = CtConfig::default();
    c.encoder_layers = 0;
    assert!(matches!(EnergyModel::new(ModelConfig::Ct(c), &mut rng(0)), Err(Error::Config(_))));
    let mut c = CtConfig::default();
    c.heads = 3;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = CtConfig::default();
    c.tokenizer[1].channels = 12;
    assert!(c.validate().is_err());
    assert!(CtConfig::wide().validate().is_ok());
}

#[test]
fn encoder_is_permutation_equivariant() {
    use rand::seq::SliceRandom;
    let m = lively(ModelConfig::Ct(small_ct(16)), 3);
    let z = Tensor::uniform(&[16, 8], -1.0, 1.0, &mut rng(4));
    let out = m.encode(&z).unwrap();
    assert_eq!(out.shape(), z.shape());
    let mut perm: Vec<usize> = (0..16).collect();
    perm.shuffle(&mut rng(5));
    let permute = |t: &Tensor| {
        let data = perm.iter().flat_map(|&i| t.data()[i * 8..(i + 1) * 8].to_vec()).collect();
        Tensor::new(&[16, 8], data).unwrap()
    };
    let permuted_out = m.encode(&permute(&z)).unwrap();
    for (a, b) in permuted_out.data().iter().zip(permute(&out).data()) {
        assert!((a - b).abs() < 1e-5);
    }
    // the score ignores token order
    let a = m.score_tokens(&z).unwrap();
    let b = m.score_tokens(&permute(&z)).unwrap();
    assert!((a - b).abs() < 1e-5, "{a} vs {b}");
}

#[test]
fn sequence_pooling_is_convex() {
    let m = lively(ModelConfig::Ct(small_ct(16)), 6);
    let one = Tensor::uniform(&[1, 8], -1.0, 1.0, &mut rng(7));
    let (pooled, w) = m.seq_pool(&one).unwrap();
    assert_eq!(pooled.data(), one.data());
    assert_eq!(w.data(), [1.0]);

    let row: Vec<f32> = (0..8).map(|i| i as f32 * 0.3 - 1.0).collect();
    let same = Tensor::new(&[5, 8], row.repeat(5)).unwrap();
    let (pooled, _) = m.seq_pool(&same).unwrap();
    for (a, b) in pooled.data().iter().zip(&row) {
        assert!((a - b).abs() < 1e-6);
    }
    for seed in 0..10 {
        let z = Tensor::uniform(&[12, 8], -3.0, 3.0, &mut rng(seed));
        let (_, w) = m.seq_pool(&z).unwrap();
        let s: f32 = w.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn scores_are_finite_and_deterministic() {
    let m = EnergyModel::new(ModelConfig::default(), &mut rng(8)).unwrap();
    let p = random_pair(64, 9);
    let a = m.score(&p).unwrap();
    assert!(a.is_finite());
    assert_eq!(m.score(&p).unwrap(), a);
    assert_eq!(m.energy(&p).unwrap(), -a);
}

#[test]
fn score_batch_matches_single_scores() {
    let m = lively(ModelConfig::Ct(small_ct(16)), 10);
    let pairs: Vec<PairTensor> = (0..5).map(|s| random_pair(16, 20 + s)).collect();
    let batch = m.score_batch(&pairs).unwrap();
    for (p, a) in pairs.iter().zip(&batch) {
        assert_eq!(m.score(p).unwrap(), *a);
    }
    assert_eq!(m.score_batch(&pairs[..1]).unwrap(), vec![batch[0]]);
    let dup = m.score_batch(&[pairs[2].clone(), pairs[2].clone(), pairs[2].clone()]).unwrap();
    assert!(dup.iter().all(|&v| v == batch[2]));
    assert!(matches!(m.score_batch(&[]), Err(Error::Contract(_))));

    // energy argmin and score argmax agree
    let energies: Vec<f32> = batch.iter().map(|a| -a).collect();
    let argmax = (0..5).max_by(|&i, &j| batch[i].total_cmp(&batch[j])).unwrap();
    let argmin = (0..5).min_by(|&i, &j| energies[i].total_cmp(&energies[j])).unwrap();
    assert_eq!(argmax, argmin);
}

#[test]
fn non_finite_parameters_are_rejected() {
    let mut m = EnergyModel::new(ModelConfig::Ct(small_ct(16)), &mut rng(0)).unwrap();
    m.params_mut()[3].data_mut()[0] = f32::NAN;
    assert!(matches!(m.score(&random_pair(16, 1)), Err(Error::Contract(_))));
}

#[test]
fn cnn_baseline() {
    let cfg = CnnConfig::default();
    let mut m = EnergyModel::new(ModelConfig::Cnn(cfg.clone()), &mut rng(1)).unwrap();
    let p = random_pair(64, 2);
    let a = m.score(&p).unwrap();
    assert!(a.is_finite());
    assert_eq!(m.score(&p).unwrap(), a);

    let mut tape = Tape::new();
    let bound = m.bind(&mut tape, false);
    let BoundVars::Cnn(v) = &bound.net else { panic!() };
    let x = tape.constant(p.tensor().clone());
    let f = net::cnn_features(&mut tape, v, x).unwrap();
    assert_eq!(tape.shape(f), [8, 8, cfg.channels[2]]);

    for t in m.params_mut() {
        t.data_mut().fill(0.0);
    }
    assert_eq!(m.score(&p).unwrap(), 0.0);
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for config in [ModelConfig::Ct(small_ct(16)), ModelConfig::Cnn(CnnConfig { input_size: 16, ..Default::default() })] {
        let mut m = lively(config, 11);
        m.confidence_floor = Some(-0.25);
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = EnergyModel::load(&path).unwrap();
        assert_eq!(back, m);
        for s in 0..10 {
            let p = random_pair(16, 100 + s);
            assert_eq!(back.score(&p).unwrap().to_bits(), m.score(&p).unwrap().to_bits());
        }
    }
    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.ckpt.json")).unwrap()).unwrap();
    assert_eq!(side["backbone"], "cnn");
    assert_eq!(side["confidence_floor"], -0.25);
}

#[test]
fn mismatched_checkpoint_is_format_error() {
    let m = EnergyModel::new(ModelConfig::Ct(small_ct(16)), &mut rng(0)).unwrap();
    let mut t = m.named_tensors();
    t.pop();
    assert!(matches!(
        EnergyModel::from_tensors(m.config().clone(), t),
        Err(Error::Format(_))
    ));
    let mut t = m.named_tensors();
    t.swap(0, 1);
    assert!(EnergyModel::from_tensors(m.config().clone(), t).is_err());
}

/// Backprop vs central differences of the score over every parameter.
/// Returns the relative error of the full concatenated gradient and the
/// worst per-tensor discrepancy. Tensors with a gradient norm below 0.1 sit
/// near the f32 difference-quotient noise floor and are compared in absolute
/// terms (`‖a − n‖ < 1e-3`), the rest relatively.
pub(crate) fn end_to_end_gradcheck(m: &EnergyModel, pair: &PairTensor) -> (f64, f64, String) {
    let mut tape = Tape::new();
    let bound = m.bind(&mut tape, true);
    let a = m.forward(&mut tape, &bound, pair, None).unwrap();
    let grads = tape.backward(a).unwrap();
    let (mut all_a, mut all_n) = (Vec::new(), Vec::new());
    let mut worst = (0.0, String::new());
    for (i, name) in m.names().iter().enumerate() {
        let analytic = grads.get(bound.vars()[i]).unwrap().data().to_vec();
        let numeric = numeric_gradient(&m.params()[i], 1e-3, |probe| {
            let mut probed = m.clone();
            probed.params_mut()[i] = probe.clone();
            probed.score(pair).unwrap() as f64
        });
        let norm = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = if norm < 0.1 {
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (*a as f64 - n).powi(2)).sum();
            diff.sqrt() * 10.0
        } else {
            relative_error(&analytic, &numeric)
        };
        if e > worst.0 {
            worst = (e, name.clone());
        }
        all_a.extend(analytic);
        all_n.extend(numeric);
    }
    (relative_error(&all_a, &all_n), worst.0, worst.1)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for seed in 0..3 {
        let m = lively(ModelConfig::Ct(small_ct(16)), 30 + seed);
        let (global, e, name) = end_to_end_gradcheck(&m, &random_pair(16, 40 + seed));
        assert!(global < 1e-2, "seed {seed}: global relative error {global}");
        // single tensors occasionally straddle a ReLU or max-pool kink
        assert!(e < 5e-2, "seed {seed}: {name} error {e}");
    }
    let m = lively(ModelConfig::Cnn(CnnConfig { input_size: 16, channels: [4, 4, 4], res_blocks: 2 }), 50);
    let (global, e, name) = end_to_end_gradcheck(&m, &random_pair(16, 51));
    assert!(global < 1e-2 && e < 5e-2, "cnn: {name} {global} {e}");
}

#[test]
fn fast_scorer_is_bit_identical_to_plain_forward() {
    let w = synth_world(3, 160, 2).unwrap();
    let m = lively(ModelConfig::default(), 60);
    let rots: Vec<BevImage> = (0..3).map(|s| random_images(64, 70 + s).0).collect();
    let fast = ModelScorer::new(&m);
    let plain = ModelScorer::plain(&m);
    let mut f = fast.prepare(&w.map, &rots).unwrap();
    let mut p = plain.prepare(&w.map, &rots).unwrap();
    for (r, x, y) in [(0, 32, 32), (1, 128, 128), (2, 80, 33), (0, 127, 90), (1, 64, 64)] {
        let a = f.score(r, x, y).unwrap();
        let b = p.score(r, x, y).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "({r}, {x}, {y}): {a} vs {b}");
        let tile = crate::data::crop_tile(&w.map, x, y, 64).unwrap();
        let direct = m.score(&PairTensor::new(&rots[r], &tile).unwrap()).unwrap();
        assert_eq!(direct.to_bits(), a.to_bits());
    }
}
