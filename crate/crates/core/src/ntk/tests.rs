use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_inputs(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![n, d], (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel of a one-hidden-layer net written out by hand:
/// f_a(x) = Σ_u W1[a,u] relu(h_u(x)) / √n1 + β b1[a], h_u(x) = W0[u]·x / √n0 + β b0[u].
fn two_layer_oracle(net: &NtkNet, x: &[f64], y: &[f64], a: usize, b: usize) -> f64 {
    let w = &net.config.widths;
    let (n0, n1, n2) = (w[0], w[1], w[2]);
    let beta = net.config.beta;
    let hidden = |v: &[f64]| -> Vec<f64> {
        (0..n1)
            .map(|u| {
                let bias = net.biases.as_ref().map_or(0.0, |bs| beta * bs[0][u]);
                dot(&net.weights[0][u * n0..(u + 1) * n0], v) / (n0 as f64).sqrt() + bias
            })
            .collect()
    };
    let (hx, hy) = (hidden(x), hidden(y));
    let relu = |v: f64| v.max(0.0);
    let step = |v: f64| if v > 0.0 { 1.0 } else { 0.0 };
    let mut k = 0.0;
    if a == b {
        k += (0..n1).map(|u| relu(hx[u]) * relu(hy[u])).sum::<f64>() / n1 as f64 + beta * beta;
    }
    let w1 = &net.weights[1];
    let back: f64 = (0..n1).map(|u| w1[a * n1 + u] * w1[b * n1 + u] * step(hx[u]) * step(hy[u])).sum::<f64>() / n1 as f64;
    k += back * (dot(x, y) / n0 as f64 + beta * beta);
    let _ = n2;
    k
}

#[test]
fn depth_one_kernel_matches_closed_form() {
    let x = random_inputs(5, 7, 1);
    for seed in 0..10 {
        for beta in [0.0, 0.3] {
            let cfg = NtkConfig::new(vec![7, 3], beta).unwrap();
            let net = NtkNet::sample(&cfg, &mut seeded_rng(seed, NTK_STREAM)).unwrap();
            let k = empirical_ntk(&net, &x).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let expected = dot(x.row(i), x.row(j)) / 7.0 + beta * beta;
                    for a in 0..3 {
                        for b in 0..3 {
                            let want = if a == b { expected } else { 0.0 };
                            assert!((k.entry(i, j, a, b) - want).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn beta_shifts_depth_one_kernel_by_beta_squared() {
    let x = random_inputs(4, 3, 2);
    let k0 = empirical_ntk(&NtkNet::sample(&NtkConfig::new(vec![3, 1], 0.0).unwrap(), &mut seeded_rng(0, 0)).unwrap(), &x).unwrap();
    let k1 = empirical_ntk(&NtkNet::sample(&NtkConfig::new(vec![3, 1], 0.5).unwrap(), &mut seeded_rng(0, 0)).unwrap(), &x).unwrap();
    for (a, b) in k0.data.data().iter().zip(k1.data.data()) {
        assert!((b - a - 0.25).abs() < 1e-12);
    }
}

#[test]
fn two_layer_kernel_matches_hand_derivation() {
    let x = random_inputs(4, 5, 3);
    for beta in [0.0, 0.7] {
        let cfg = NtkConfig::new(vec![5, 9, 2], beta).unwrap();
        let net = NtkNet::sample(&cfg, &mut seeded_rng(4, NTK_STREAM)).unwrap();
        let k = empirical_ntk(&net, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for a in 0..2 {
                    for b in 0..2 {
                        let want = two_layer_oracle(&net, x.row(i), x.row(j), a, b);
                        assert!((k.entry(i, j, a, b) - want).abs() < 1e-10 * want.abs().max(1.0));
                    }
                }
            }
        }
        assert!(k.max_asymmetry() < 1e-12);
        assert!(k.is_psd(1e-8));
    }
}

#[test]
fn blockwise_gram_matches_hand_derivation() {
    // 4 inputs of 20000 features: the first weight matrix spans several Jacobian blocks.
    let x = random_inputs(4, 20_000, 5);
    let cfg = NtkConfig::new(vec![20_000, 200, 1], 0.2).unwrap();
    let net = NtkNet::sample(&cfg, &mut seeded_rng(1, NTK_STREAM)).unwrap();
    let k = empirical_ntk(&net, &x).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let want = two_layer_oracle(&net, x.row(i), x.row(j), 0, 0);
            assert!((k.entry(i, j, 0, 0) - want).abs() < 1e-10 * want.abs().max(1.0));
        }
    }
}

#[test]
fn budget_is_enforced() {
    let x = random_inputs(3, 4, 0);
    let mut cfg = NtkConfig::new(vec![4, 8, 1], 0.0).unwrap();
    cfg.budget = 10;
    let net = NtkNet::sample(&cfg, &mut seeded_rng(0, 0)).unwrap();
    assert!(matches!(empirical_ntk(&net, &x), Err(Error::ResourceLimit(_))));
}

#[test]
fn input_shape_checked() {
    let net = NtkNet::sample(&NtkConfig::new(vec![4, 1], 0.0).unwrap(), &mut seeded_rng(0, 0)).unwrap();
    assert!(matches!(empirical_ntk(&net, &random_inputs(2, 3, 0)), Err(Error::ShapeMismatch(_))));
}

#[test]
fn zero_beta_has_no_bias_parameters() {
    let cfg = NtkConfig::new(vec![3, 4, 2], 0.0).unwrap();
    let net = NtkNet::sample(&cfg, &mut seeded_rng(0, 0)).unwrap();
    assert!(net.biases.is_none());
    assert_eq!(net.param_count(), 12 + 8);
    assert_eq!(NtkConfig::new(vec![3, 4, 2], 0.1).unwrap().param_count(), 12 + 4 + 8 + 2);
    assert!(NtkConfig::new(vec![3], 0.0).is_err());
    assert!(NtkConfig::new(vec![3, 0], 0.0).is_err());
    assert!(NtkConfig::new(vec![3, 1], -1.0).is_err());
}

fn arccos_relu(a: f64, b: f64, c: f64) -> f64 {
    let s = (a * b).sqrt();
    let cos = (c / s).clamp(-1.0, 1.0);
    let theta = cos.acos();
    s / (2.0 * PI) * (theta.sin() + (PI - theta) * cos)
}

#[test]
fn nngp_first_layer_closed_form() {
    let mut x = Tensor::zeros(vec![2, 4]);
    x.row_mut(0).copy_from_slice(&[1.0, 1.0, 1.0, 1.0]);
    x.row_mut(1).copy_from_slice(&[1.0, -1.0, 0.0, 2.0]);
    let cov0 = nngp_covariance(&NtkConfig::new(vec![4, 1], 0.0).unwrap(), &x, 1, &mut seeded_rng(0, 0)).unwrap();
    assert_eq!(cov0.layers[0].data()[0], 1.0);
    let cov5 = nngp_covariance(&NtkConfig::new(vec![4, 1], 0.5).unwrap(), &x, 1, &mut seeded_rng(0, 0)).unwrap();
    for (a, b) in cov0.layers[0].data().iter().zip(cov5.layers[0].data()) {
        assert!((b - a - 0.25).abs() < 1e-15);
    }
    assert!(nngp_covariance(&NtkConfig::new(vec![4, 1], 0.0).unwrap(), &x, 0, &mut seeded_rng(0, 0)).is_err());
}

#[test]
fn nngp_second_layer_matches_oracles() {
    let x = random_inputs(3, 6, 8);
    let cfg = NtkConfig::new(vec![6, 10, 1], 0.3).unwrap();
    let cov = nngp_covariance(&cfg, &x, 20_000, &mut seeded_rng(1, 0)).unwrap();
    let oracle = nngp_covariance(&cfg, &x, 1_000_000, &mut seeded_rng(2, 0)).unwrap();
    let s1 = &cov.layers[0];
    for i in 0..3 {
        for j in 0..3 {
            let got = cov.layers[1].data()[i * 3 + j];
            let se = cov.std_errors[1].data()[i * 3 + j];
            let mc = oracle.layers[1].data()[i * 3 + j];
            let se_oracle = oracle.std_errors[1].data()[i * 3 + j];
            assert!((got - mc).abs() <= 3.0 * (se * se + se_oracle * se_oracle).sqrt(), "({i},{j}) {got} vs {mc}");
            let exact = arccos_relu(s1.data()[i * 3 + i], s1.data()[j * 3 + j], s1.data()[i * 3 + j]) + 0.09;
            assert!((mc - exact).abs() <= 4.0 * se_oracle + 1e-12, "({i},{j}) {mc} vs {exact}");
        }
    }
}

#[test]
fn nngp_rejects_indefinite_covariance() {
    assert!(relu_expectation(1.0, 1.0, 2.0, &[(0.1, 0.2)]).is_err());
    let (m, _) = relu_expectation(1.0, 1.0, 1.0 + 1e-12, &[(1.0, 0.0)]).unwrap();
    assert!((m - 1.0).abs() < 1e-6);
}

#[test]
fn zero_steps_means_zero_drift() {
    let x = random_inputs(6, 4, 9);
    let y = random_inputs(6, 1, 10);
    let cfg = DriftConfig { depth: 2, widths: vec![16], beta: 0.0, steps: 0, learning_rate: 1.0, seed: 0 };
    let r = training_drift_study(&cfg, &x, &y).unwrap();
    assert_eq!(r.points[0].relative_drift, 0.0);
}

#[test]
fn gradient_descent_matches_finite_differences() {
    let x = random_inputs(5, 3, 11);
    let y = random_inputs(5, 2, 12);
    let cfg = NtkConfig::new(vec![3, 6, 2], 0.4).unwrap();
    let net = NtkNet::sample(&cfg, &mut seeded_rng(3, 0)).unwrap();
    let loss = |n: &NtkNet| mse(n.forward(&x).unwrap().data(), y.data(), 5);
    // One step with tiny lr moves each weight by −lr·∂L/∂w.
    let lr = 1e-6;
    let mut stepped = net.clone();
    gradient_descent(&mut stepped, &x, &y, 1, lr).unwrap();
    let h = 1e-6;
    for (l, idx) in [(0usize, 0usize), (0, 7), (1, 3)] {
        let mut up = net.clone();
        up.weights[l][idx] += h;
        let mut dn = net.clone();
        dn.weights[l][idx] -= h;
        let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
        let g = (net.weights[l][idx] - stepped.weights[l][idx]) / lr;
        assert!((fd - g).abs() < 1e-6, "w[{l}][{idx}]: {fd} vs {g}");
    }
    let mut up = net.clone();
    up.biases.as_mut().unwrap()[0][2] += h;
    let mut dn = net.clone();
    dn.biases.as_mut().unwrap()[0][2] -= h;
    let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
    let g = (net.biases.as_ref().unwrap()[0][2] - stepped.biases.as_ref().unwrap()[0][2]) / lr;
    assert!((fd - g).abs() < 1e-6);
}

#[test]
fn single_width_single_seed_study_is_the_raw_kernel() {
    let x = random_inputs(3, 4, 13);
    let study = WidthStudyConfig { depth: 2, outputs: 1, widths: vec![8], seeds: 1, beta_compare: 0.5 };
    let r = width_convergence_study(&study, &x).unwrap();
    let net = NtkNet::sample(&NtkConfig::new(vec![4, 8, 1], 0.0).unwrap(), &mut seeded_rng(0, NTK_STREAM)).unwrap();
    assert_eq!(r.per_width[0].mean_kernel, empirical_ntk(&net, &x).unwrap().data);
    assert!(r.per_width[0].std_kernel.data().iter().all(|&s| s == 0.0));
    assert!(r.beta_distance > 0.0);
}
