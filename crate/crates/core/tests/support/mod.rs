//! Randomised property suites shared by the property tests and the acceptance runner.
//!
//! Each suite returns `Err` with a readable reason on the first failing case.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zbnn::datasets::{decode_idx, encode_idx_images, encode_idx_labels, write_idx, LabeledDataset, Normalization};
use zbnn::layers::{
    he_initialize, BatchNormLayer, ConvLayer, DropoutLayer, Layer, LinearLayer, Mode, PoolKind, PoolLayer, ResidualBlock,
    ResidualVariant,
};
use zbnn::network::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
use zbnn::training::{seeded_rng, train, OptimizerConfig, TrainConfig, INIT_STREAM};
use zbnn::verify::{certify_interpolation, extract_nap, extract_nap_with_margin, fairness_zero_image, Verdict};
use zbnn::{Network, Tensor};

pub type SuiteResult = Result<(), String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Linear,
    Conv,
    MaxPool,
    AvgPool,
    Relu,
    Flatten,
    Plain,
    Nf,
    Fixup,
    Dropout,
    BatchNormTrain,
    BatchNormEval,
}

/// Every kind that is positively homogeneous when bias-free.
pub const HOMOGENEOUS: [Kind; 10] =
    [Kind::Linear, Kind::Conv, Kind::MaxPool, Kind::AvgPool, Kind::Relu, Kind::Flatten, Kind::Plain, Kind::Nf, Kind::Fixup, Kind::Dropout];

pub const ALL_KINDS: [Kind; 12] = [
    Kind::Linear,
    Kind::Conv,
    Kind::MaxPool,
    Kind::AvgPool,
    Kind::Relu,
    Kind::Flatten,
    Kind::Plain,
    Kind::Nf,
    Kind::Fixup,
    Kind::Dropout,
    Kind::BatchNormTrain,
    Kind::BatchNormEval,
];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn run_seeded(cases: u32, body: impl Fn(u64) -> Result<(), TestCaseError>) -> SuiteResult {
    runner(cases).run(&any::<u64>(), body).map_err(|e| e.to_string())
}

fn gaussian(dims: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

fn dense(d: usize, rng: &mut impl Rng) -> Layer {
    let mut l = Layer::Linear(LinearLayer::new(d, d, false));
    he_initialize(std::slice::from_mut(&mut l), rng);
    l
}

/// A random bias-free layer of `kind` together with a compatible batched input.
pub fn random_layer(kind: Kind, rng: &mut impl Rng) -> (Layer, Tensor) {
    let batch = rng.gen_range(1..4);
    let image = |rng: &mut dyn rand::RngCore, min: usize| {
        let c = rng.gen_range(1..4);
        vec![batch, c, rng.gen_range(min..min + 4), rng.gen_range(min..min + 4)]
    };
    let (mut layer, dims) = match kind {
        Kind::Linear => {
            let (i, o) = (rng.gen_range(1..8), rng.gen_range(1..8));
            (Layer::Linear(LinearLayer::new(i, o, false)), vec![batch, i])
        }
        Kind::Conv => {
            let k = rng.gen_range(1..4);
            let dims = image(rng, k);
            let conv = ConvLayer::new(
                dims[1],
                rng.gen_range(1..4),
                (k, k),
                (rng.gen_range(1..3), rng.gen_range(1..3)),
                (rng.gen_range(0..2), rng.gen_range(0..2)),
                false,
            );
            (Layer::Conv(conv), dims)
        }
        Kind::MaxPool | Kind::AvgPool => {
            let w = rng.gen_range(1..4);
            let pk = if kind == Kind::MaxPool { PoolKind::Max } else { PoolKind::Avg };
            (Layer::Pool(PoolLayer::new(pk, w, rng.gen_range(1..3)).unwrap()), image(rng, w))
        }
        Kind::Relu => {
            let d = rng.gen_range(1..12);
            (Layer::Relu, vec![batch, d])
        }
        Kind::Flatten => (Layer::Flatten, image(rng, 1)),
        Kind::Plain | Kind::Nf | Kind::Fixup => {
            let d = rng.gen_range(1..6);
            let branch = vec![dense(d, rng), Layer::Relu, dense(d, rng)];
            let block = match kind {
                Kind::Plain => ResidualBlock::plain(branch),
                Kind::Nf => ResidualBlock::nf(branch, rng.gen_range(0.1..2.0), rng.gen_range(0.5..2.0)).unwrap(),
                _ => {
                    let mut b = ResidualBlock::fixup(branch);
                    if let ResidualVariant::Fixup { multiplier } = &mut b.variant {
                        multiplier.data_mut()[0] = rng.gen_range(-1.5..1.5);
                    }
                    b
                }
            };
            (Layer::Residual(block), vec![batch, d])
        }
        Kind::Dropout => {
            let d = rng.gen_range(1..8);
            (Layer::Dropout(DropoutLayer::new(rng.gen_range(0.0..0.9)).unwrap()), vec![batch, d])
        }
        Kind::BatchNormTrain | Kind::BatchNormEval => {
            let c = rng.gen_range(1..4);
            let rand_vec = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| (0..c).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
            let bn = BatchNormLayer::with_stats(
                rand_vec(rng, 0.5, 2.0),
                rand_vec(rng, -1.0, 1.0),
                rand_vec(rng, -1.0, 1.0),
                rand_vec(rng, 0.5, 2.0),
                1e-5,
            )
            .unwrap();
            // Train-mode statistics need at least two values per channel.
            let dims = if rng.gen_bool(0.5) { vec![batch + 2, c] } else { vec![batch + 1, c, 2, 2] };
            (Layer::BatchNorm(bn), dims)
        }
    };
    he_initialize(std::slice::from_mut(&mut layer), rng);
    (layer, gaussian(dims, rng))
}

fn mode_of(kind: Kind) -> Mode {
    if kind == Kind::BatchNormTrain {
        Mode::Train
    } else {
        Mode::Eval
    }
}

/// `f(s·x) = s·f(x)` for every bias-free homogeneous layer kind, `cases` draws per kind.
pub fn layer_homogeneity(cases: u32) -> SuiteResult {
    for kind in HOMOGENEOUS {
        run_seeded(cases, |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (layer, x) = random_layer(kind, &mut rng);
            let s = 10f64.powf(rng.gen_range(-3.0..3.0));
            let lhs = layer.forward(&x.scale(s), Mode::Eval).map_err(|e| fail(e.to_string()))?;
            let rhs = layer.forward(&x, Mode::Eval).map_err(|e| fail(e.to_string()))?.scale(s);
            let diff = lhs.max_abs_diff(&rhs).unwrap();
            let scale = rhs.max_abs().max(f64::MIN_POSITIVE);
            if diff > 1e-12 * scale {
                return Err(fail(format!("{kind:?}: relative error {:e} at s = {s}", diff / scale)));
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Smallest |pre-activation| seen by ReLUs inside `layer`, including the layer itself.
fn kink_margin(layer: &Layer, x: &Tensor, mode: Mode) -> f64 {
    let mut margin = f64::INFINITY;
    let mut probe = |t: &Tensor| margin = t.data().iter().fold(margin, |m, v| m.min(v.abs()));
    layer.forward_probed(x, mode, &mut probe).unwrap();
    margin
}

/// Ties in a max-pool window make the subgradient ambiguous.
fn has_pool_ties(layer: &Layer, x: &Tensor) -> bool {
    let Layer::Pool(p) = layer else { return false };
    if p.kind != PoolKind::Max {
        return false;
    }
    let d = x.dims();
    let (h, w) = (d[2], d[3]);
    let (oh, ow) = ((h - p.window) / p.stride + 1, (w - p.window) / p.stride + 1);
    for plane in x.data().chunks(h * w) {
        for i in 0..oh {
            for j in 0..ow {
                let mut vals: Vec<f64> = (0..p.window)
                    .flat_map(|a| (0..p.window).map(move |b| (i * p.stride + a) * w + j * p.stride + b))
                    .map(|k| plane[k])
                    .collect();
                vals.sort_by(|a, b| b.total_cmp(a));
                if vals.len() > 1 && vals[0] - vals[1] < 1e-3 {
                    return true;
                }
            }
        }
    }
    false
}

fn probe_loss(layer: &Layer, x: &Tensor, up: &Tensor, mode: Mode) -> f64 {
    layer.forward(x, mode).unwrap().dot(up).unwrap()
}

/// Analytic input and parameter gradients against central differences, `cases` draws per kind.
pub fn gradient_check(cases: u32) -> SuiteResult {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-6;
    let close = |a: f64, b: f64| (a - b).abs() <= TOL * (1.0 + a.abs().max(b.abs()));
    for kind in ALL_KINDS {
        run_seeded(cases, |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut layer, x) = random_layer(kind, &mut rng);
            let mode = mode_of(kind);
            if kink_margin(&layer, &x, mode) < 1e-3 || has_pool_ties(&layer, &x) {
                return Ok(());
            }
            let out = layer.forward(&x, mode).unwrap();
            let up = gaussian(out.dims().to_vec(), &mut rng);
            let grads = layer.backward(&x, &up, mode).map_err(|e| fail(e.to_string()))?;

            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data_mut()[i] += H;
                xm.data_mut()[i] -= H;
                let fd = (probe_loss(&layer, &xp, &up, mode) - probe_loss(&layer, &xm, &up, mode)) / (2.0 * H);
                let an = grads.input.data()[i];
                if !close(an, fd) {
                    return Err(fail(format!("{kind:?}: input grad {i} analytic {an} vs numeric {fd}")));
                }
            }

            let count = layer.params().len();
            if grads.params.len() != count {
                return Err(fail(format!("{kind:?}: {} param grads for {count} params", grads.params.len())));
            }
            for p in 0..count {
                for i in 0..layer.params()[p].len() {
                    let orig = layer.params()[p].data()[i];
                    layer.params_mut()[p].data_mut()[i] = orig + H;
                    let fp = probe_loss(&layer, &x, &up, mode);
                    layer.params_mut()[p].data_mut()[i] = orig - H;
                    let fm = probe_loss(&layer, &x, &up, mode);
                    layer.params_mut()[p].data_mut()[i] = orig;
                    let fd = (fp - fm) / (2.0 * H);
                    let an = grads.params[p].data()[i];
                    if !close(an, fd) {
                        return Err(fail(format!("{kind:?}: param {p}[{i}] analytic {an} vs numeric {fd}")));
                    }
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn random_zero_bias_net(rng: &mut impl Rng) -> Network {
    let inputs = rng.gen_range(2..10);
    let hidden: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(2..12)).collect();
    let mut net = Network::fcn("prop", inputs, &hidden, rng.gen_range(2..6), false).unwrap();
    net.initialize_he(rng);
    net
}

/// Scaling by `s ∈ {0.1, 10}` keeps the NAP and the class, skipping inputs within `1e-9` of a ReLU boundary.
pub fn nap_cone_invariance(cases: u32) -> SuiteResult {
    run_seeded(cases, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_zero_bias_net(&mut rng);
        let x = gaussian(vec![net.input_len()], &mut rng);
        let (nap, margin) = extract_nap_with_margin(&net, &x).unwrap();
        if margin <= 1e-9 {
            return Ok(());
        }
        let class = net.predict(&x).unwrap().class_index;
        for s in [0.1, 10.0] {
            let xs = x.scale(s);
            if extract_nap(&net, &xs).unwrap() != nap {
                return Err(fail(format!("NAP changed under s = {s} (margin {margin:e})")));
            }
            if net.predict(&xs).unwrap().class_index != class {
                return Err(fail(format!("class changed under s = {s}")));
            }
        }
        Ok(())
    })
}

fn random_checkpoint_net(rng: &mut impl Rng) -> Network {
    match rng.gen_range(0..3) {
        0 => {
            let bias = rng.gen_bool(0.5);
            let mut net = Network::fcn("fcn", rng.gen_range(1..10), &[rng.gen_range(1..10)], rng.gen_range(2..5), bias).unwrap();
            net.initialize_he(rng);
            for p in net.params_mut() {
                p.data_mut().iter_mut().for_each(|v| *v = rng.sample::<f64, _>(StandardNormal) * 1e3);
            }
            net
        }
        1 => {
            let mut net = Network::cnn28("cnn", 10, rng.gen_bool(0.5)).unwrap();
            net.initialize_he(rng);
            net
        }
        _ => {
            let d = rng.gen_range(2..6);
            let c = rng.gen_range(1..4);
            let mut fixup = ResidualBlock::fixup(vec![dense(d, rng), Layer::Relu, dense(d, rng)]);
            if let ResidualVariant::Fixup { multiplier } = &mut fixup.variant {
                multiplier.data_mut()[0] = rng.gen();
            }
            let bn = BatchNormLayer::with_stats(
                (0..d).map(|_| rng.gen()).collect(),
                (0..d).map(|_| rng.gen()).collect(),
                (0..d).map(|_| rng.gen()).collect(),
                (0..d).map(|_| rng.gen_range(0.1..3.0)).collect(),
                1e-5,
            )
            .unwrap();
            let layers = vec![
                dense(d, rng),
                Layer::BatchNorm(bn),
                Layer::Relu,
                Layer::Residual(fixup),
                Layer::Residual(ResidualBlock::nf(vec![dense(d, rng)], 0.2, 1.5).unwrap()),
                Layer::Dropout(DropoutLayer::new(0.25).unwrap()),
                Layer::Linear({
                    let mut l = LinearLayer::new(d, c + 1, false);
                    l.weight.data_mut().iter_mut().for_each(|v| *v = rng.gen());
                    l
                }),
            ];
            Network::new("mixed", vec![d], layers, false).unwrap()
        }
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Encoding then decoding a checkpoint, in memory and on disk, reproduces every bit.
pub fn checkpoint_round_trip(cases: u32) -> SuiteResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_seeded(cases, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_checkpoint_net(&mut rng);
        let bytes = encode_checkpoint(&net).unwrap();
        let back = decode_checkpoint(&bytes).map_err(|e| fail(e.to_string()))?;
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let disk = load_checkpoint(&path).map_err(|e| fail(e.to_string()))?;
        for other in [&back, &disk] {
            if other != &net || other.digest() != net.digest() {
                return Err(fail(format!("round trip changed network {}", net.name)));
            }
            for (p, q) in net.state().iter().zip(other.state()) {
                if !same_bits(p.data(), q.data()) {
                    return Err(fail("parameter bits differ".into()));
                }
            }
        }
        let x = gaussian(net.input_shape.clone(), &mut rng);
        if !same_bits(net.logits(&x).unwrap().data(), disk.logits(&x).unwrap().data()) {
            return Err(fail("logits differ after reload".into()));
        }
        if encode_checkpoint(&back).unwrap() != bytes {
            return Err(fail("re-encoding is not byte-identical".into()));
        }
        Ok(())
    })
}

/// Random IDX byte streams decode to `byte/255` and re-export byte-for-byte.
pub fn idx_round_trip(cases: u32) -> SuiteResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_seeded(cases, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, r, c) = (rng.gen_range(0..6), rng.gen_range(1..9), rng.gen_range(1..9));
        let pixels: Vec<u8> = (0..n * r * c).map(|_| rng.gen()).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..10)).collect();
        let images = encode_idx_images(n, r, c, &pixels);
        let label_bytes = encode_idx_labels(&labels);
        let ds = decode_idx(&images, &label_bytes).map_err(|e| fail(e.to_string()))?;
        if ds.inputs.dims() != [n, r, c] {
            return Err(fail(format!("decoded dims {:?}", ds.inputs.dims())));
        }
        for (v, &p) in ds.inputs.data().iter().zip(&pixels) {
            if v.to_bits() != (p as f64 / 255.0).to_bits() {
                return Err(fail(format!("pixel {p} decoded to {v}")));
            }
        }
        if ds.labels.iter().zip(&labels).any(|(&a, &b)| a != b as usize) {
            return Err(fail("labels differ".into()));
        }
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        write_idx(&ds, &ip, &lp).unwrap();
        if std::fs::read(&ip).unwrap() != images || std::fs::read(&lp).unwrap() != label_bytes {
            return Err(fail("re-exported IDX bytes differ".into()));
        }
        Ok(())
    })
}

/// Nearby inputs sharing a NAP and a class certify every interpolant; others are reported inapplicable.
pub fn interpolation_certificates(cases: u32) -> SuiteResult {
    run_seeded(cases, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_zero_bias_net(&mut rng);
        let x1 = gaussian(vec![net.input_len()], &mut rng);
        let eps = 10f64.powf(rng.gen_range(-3.0..0.0));
        let x2 = x1.add(&gaussian(vec![net.input_len()], &mut rng).scale(eps)).unwrap();
        let same = extract_nap(&net, &x1).unwrap() == extract_nap(&net, &x2).unwrap()
            && net.predict(&x1).unwrap().class_index == net.predict(&x2).unwrap().class_index;
        let cert = certify_interpolation(&net, &x1, &x2, 100).map_err(|e| fail(e.to_string()))?;
        match (&cert.verdict, same) {
            (Verdict::Certified, true) | (Verdict::Inapplicable { .. }, false) => Ok(()),
            (v, _) => Err(fail(format!("hypothesis {same} gave verdict {}", v.label()))),
        }
    })
}

/// Zero-bias nets trained on heavily imbalanced labels still map the zero input to the uniform distribution.
pub fn zero_image_after_imbalanced_training(cases: u32) -> SuiteResult {
    run_seeded(cases, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, classes, n) = (rng.gen_range(2..6), rng.gen_range(2..5), 64);
        let inputs = gaussian(vec![n, d], &mut rng);
        let labels: Vec<usize> = (0..n).map(|i| if i % 8 == 0 { rng.gen_range(1..classes) } else { 0 }).collect();
        let ds = LabeledDataset::new(inputs, labels, classes, Normalization::IDENTITY).unwrap();
        let mut net = Network::fcn("imb", d, &[8], classes, false).unwrap();
        net.initialize_he(&mut seeded_rng(seed, INIT_STREAM));
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.05,
            optimizer: OptimizerConfig::SgdMomentum { momentum: 0.9 },
            seed,
            ..TrainConfig::default()
        };
        train(&mut net, &ds, &ds, &cfg).map_err(|e| fail(e.to_string()))?;
        let report = fairness_zero_image(&net).unwrap();
        if report.max_deviation > 1e-12 {
            return Err(fail(format!("zero-image deviation {:e}", report.max_deviation)));
        }
        Ok(())
    })
}
