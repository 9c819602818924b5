use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(dims: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(dims.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn relu_forward_and_backward() {
    let x = t(&[1, 3], &[-1.0, 0.0, 2.0]);
    assert_eq!(Layer::Relu.forward(&x, Mode::Eval).unwrap().data(), &[0.0, 0.0, 2.0]);
    let x = t(&[1, 2], &[-1.0, 2.0]);
    let g = Layer::Relu.backward(&x, &t(&[1, 2], &[1.0, 1.0]), Mode::Eval).unwrap();
    assert_eq!(g.input.data(), &[0.0, 1.0]);
    let at_zero = Layer::Relu.backward(&t(&[1, 1], &[0.0]), &t(&[1, 1], &[5.0]), Mode::Eval).unwrap();
    assert_eq!(at_zero.input.data(), &[0.0]);
}

#[test]
fn identity_linear() {
    let l = Layer::Linear(LinearLayer::from_weights(Tensor::identity(2), None).unwrap());
    assert_eq!(l.forward(&t(&[1, 2], &[3.0, 4.0]), Mode::Eval).unwrap().data(), &[3.0, 4.0]);
}

#[test]
fn linear_weight_gradient_is_outer_product() {
    let w = t(&[2, 3], &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
    let l = Layer::Linear(LinearLayer::from_weights(w, Some(Tensor::zeros(vec![2]))).unwrap());
    let x = t(&[1, 3], &[1.0, 2.0, -1.0]);
    let g = t(&[1, 2], &[0.5, -2.0]);
    let grads = l.backward(&x, &g, Mode::Eval).unwrap();
    assert_eq!(grads.params[0].data(), &[0.5, 1.0, -0.5, -2.0, -4.0, 2.0]);
    assert_eq!(grads.params[1].data(), &[0.5, -2.0]);
}

#[test]
fn linear_shape_mismatch() {
    let l = Layer::Linear(LinearLayer::new(3, 2, false));
    assert!(matches!(l.forward(&Tensor::zeros(vec![1, 4]), Mode::Eval), Err(crate::Error::ShapeMismatch(_))));
}

#[test]
fn dropout_is_identity_at_inference() {
    let d = Layer::Dropout(DropoutLayer::new(0.5).unwrap());
    let x = t(&[1, 3], &[1.0, -2.0, 3.0]);
    assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
    assert!(DropoutLayer::new(1.0).is_err());
}

#[test]
fn max_and_avg_pool() {
    let x = t(&[1, 1, 2, 4], &[1.0, 5.0, 2.0, 0.0, 3.0, -1.0, 7.0, 4.0]);
    let max = Layer::Pool(PoolLayer::new(PoolKind::Max, 2, 2).unwrap());
    assert_eq!(max.forward(&x, Mode::Eval).unwrap().data(), &[5.0, 7.0]);
    let avg = Layer::Pool(PoolLayer::new(PoolKind::Avg, 2, 2).unwrap());
    assert_eq!(avg.forward(&x, Mode::Eval).unwrap().data(), &[2.0, 3.25]);
    let g = max.backward(&x, &t(&[1, 1, 1, 2], &[1.0, 2.0]), Mode::Eval).unwrap();
    assert_eq!(g.input.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    assert!(PoolLayer::new(PoolKind::Max, 0, 1).is_err());
}

#[test]
fn residual_variants_evaluate_their_formulas() {
    let branch = || vec![Layer::Linear(LinearLayer::from_weights(t(&[2, 2], &[2.0, 0.0, 0.0, -1.0]), None).unwrap())];
    let x = t(&[1, 2], &[1.0, 3.0]);
    let plain = Layer::Residual(ResidualBlock::plain(branch()));
    assert_eq!(plain.forward(&x, Mode::Eval).unwrap().data(), &[3.0, 0.0]);
    let mut fix = ResidualBlock::fixup(branch());
    if let ResidualVariant::Fixup { multiplier } = &mut fix.variant {
        multiplier.data_mut()[0] = 0.5;
    }
    assert_eq!(Layer::Residual(fix).forward(&x, Mode::Eval).unwrap().data(), &[2.0, 1.5]);
    let nf = Layer::Residual(ResidualBlock::nf(branch(), 0.5, 2.0).unwrap());
    // x + 0.5 * G(x / 2)
    assert_eq!(nf.forward(&x, Mode::Eval).unwrap().data(), &[1.5, 2.25]);
    assert!(ResidualBlock::nf(branch(), 0.0, 1.0).is_err());
}

#[test]
fn bias_free_classification() {
    assert!(Layer::Linear(LinearLayer::new(2, 2, false)).is_bias_free());
    assert!(!Layer::Linear(LinearLayer::new(2, 2, true)).is_bias_free());
    assert!(!Layer::BatchNorm(BatchNormLayer::new(2, 1e-5).unwrap()).is_bias_free());
    let nested = ResidualBlock::plain(vec![Layer::Conv(ConvLayer::new(1, 1, (3, 3), (1, 1), (1, 1), true))]);
    assert!(!Layer::Residual(nested).is_bias_free());
}

#[test]
fn fixup_scale_values() {
    assert_eq!(fixup_scale(1, 3).unwrap(), 1.0);
    assert!((fixup_scale(4, 2).unwrap() - 0.5).abs() < 1e-15);
    assert!(matches!(fixup_scale(4, 1), Err(crate::Error::InvalidConfig(_))));
}

fn fixup_stack(blocks: usize) -> Vec<Layer> {
    let mut layers = vec![Layer::Linear(LinearLayer::new(6, 8, false))];
    for _ in 0..blocks {
        layers.push(Layer::Residual(ResidualBlock::fixup(vec![
            Layer::Linear(LinearLayer::new(8, 8, false)),
            Layer::Relu,
            Layer::Linear(LinearLayer::new(8, 8, false)),
        ])));
    }
    layers.push(Layer::Relu);
    layers.push(Layer::Linear(LinearLayer::new(8, 3, false)));
    layers
}

#[test]
fn fixup_initialisation_zeroes_and_scales() {
    let mut scaled = fixup_stack(4);
    fixup_initialize(&mut scaled, 4, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let Layer::Linear(classifier) = scaled.last().unwrap() else { panic!() };
    assert!(classifier.weight.data().iter().all(|&v| v == 0.0));

    // Same RNG stream with L = 1 gives unscaled draws for the first branch layer.
    let mut unscaled = fixup_stack(4);
    fixup_initialize(&mut unscaled, 1, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    for (a, b) in scaled.iter().zip(&unscaled) {
        if let (Layer::Residual(ra), Layer::Residual(rb)) = (a, b) {
            let (Layer::Linear(first_a), Layer::Linear(first_b)) = (&ra.branch[0], &rb.branch[0]) else { panic!() };
            for (x, y) in first_a.weight.data().iter().zip(first_b.weight.data()) {
                assert!((x - 0.5 * y).abs() < 1e-15);
            }
            let Layer::Linear(last) = &ra.branch[2] else { panic!() };
            assert!(last.weight.data().iter().all(|&v| v == 0.0));
            assert_eq!(ra.params().last().unwrap().data(), &[1.0]);
            assert!(first_a.bias.is_none());
        }
    }
}

#[test]
fn fixup_requires_fixup_blocks() {
    let mut layers = vec![Layer::Linear(LinearLayer::new(2, 2, false))];
    assert!(fixup_initialize(&mut layers, 1, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    let mut layers = fixup_stack(2);
    assert!(fixup_initialize(&mut layers, 2, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn relu_site_count_includes_residual_branches() {
    let layers = fixup_stack(2);
    let mut dims = vec![6];
    let mut total = 0;
    for l in &layers {
        let (s, out) = l.relu_sites(&dims).unwrap();
        total += s;
        dims = out;
    }
    assert_eq!(total, 8 * 2 + 8);
    assert_eq!(dims, vec![3]);
}

#[test]
fn spec_round_trip_builds_same_structure() {
    let layers = fixup_stack(1);
    for l in &layers {
        assert_eq!(l.spec().build().unwrap().spec(), l.spec());
    }
}
