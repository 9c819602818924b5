//! Finite-width neural tangent kernels and NNGP covariances for ReLU MLPs in
//! the NTK parameterisation: `h_{l+1} = W_l a_l / √n_l + β b_l`, all
//! parameters standard normal, no bias parameters when `β = 0`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::numerics::{gemm, transpose, Tensor};
use crate::training::seeded_rng;

/// Seed stream for NTK parameter sampling.
pub const NTK_STREAM: u64 = 7;

/// Default cap on Jacobian entries (parameters × inputs × outputs).
pub const DEFAULT_BUDGET: usize = 2_000_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtkConfig {
    /// `n_0, n_1, …, n_L`; depth is `widths.len() − 1`
    pub widths: Vec<usize>,
    pub beta: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl NtkConfig {
    pub fn new(widths: Vec<usize>, beta: f64) -> Result<Self> {
        let cfg = NtkConfig { widths, beta, budget: DEFAULT_BUDGET };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(config_err!("NTK network needs at least two positive widths, got {:?}", self.widths));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(config_err!("beta must be finite and non-negative, got {}", self.beta));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn has_bias(&self) -> bool {
        self.beta > 0.0
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + if self.has_bias() { w[1] } else { 0 }).sum()
    }
}

/// MLP in the NTK parameterisation.
#[derive(Clone, Debug, PartialEq)]
pub struct NtkNet {
    pub config: NtkConfig,
    /// `weights[l]` is `n_{l+1} × n_l`, row-major
    pub weights: Vec<Vec<f64>>,
    /// present only when `β > 0`
    pub biases: Option<Vec<Vec<f64>>>,
}

/// Recorded forward pass over a batch.
struct Trace {
    /// `acts[l]`: `[N, n_l]` layer inputs (`acts[0]` is the data)
    acts: Vec<Vec<f64>>,
    /// `pre[l]`: `[N, n_{l+1}]` pre-activations; the last one is the output
    pre: Vec<Vec<f64>>,
}

impl NtkNet {
    pub fn sample(config: &NtkConfig, rng: &mut impl Rng) -> Result<NtkNet> {
        config.validate()?;
        let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let weights: Vec<Vec<f64>> = config.widths.windows(2).map(|w| normal(w[1] * w[0])).collect();
        let biases = config.has_bias().then(|| config.widths.windows(2).map(|w| normal(w[1])).collect());
        Ok(NtkNet { config: config.clone(), weights, biases })
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    fn check_inputs(&self, x: &Tensor) -> Result<usize> {
        if x.rank() != 2 || x.dims()[1] != self.config.inputs() {
            return Err(shape_err!("NTK inputs must be [N, {}], got {}", self.config.inputs(), x.shape()));
        }
        Ok(x.dims()[0])
    }

    fn trace(&self, x: &[f64], n: usize) -> Trace {
        let w = &self.config.widths;
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(w.len() - 1);
        for l in 0..w.len() - 1 {
            let (fan_in, fan_out) = (w[l], w[l + 1]);
            let wt = transpose(&self.weights[l], fan_out, fan_in);
            let mut h = vec![0.0; n * fan_out];
            gemm(n, fan_out, fan_in, &acts[l], &wt, &mut h);
            let scale = 1.0 / (fan_in as f64).sqrt();
            for (k, v) in h.iter_mut().enumerate() {
                *v *= scale;
                if let Some(b) = &self.biases {
                    *v += self.config.beta * b[l][k % fan_out];
                }
            }
            if l + 1 < w.len() - 1 {
                acts.push(h.iter().map(|&v| v.max(0.0)).collect());
            }
            pre.push(h);
        }
        Trace { acts, pre }
    }

    /// Outputs `[N, n_L]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.check_inputs(x)?;
        let mut t = self.trace(x.data(), n);
        Tensor::new(vec![n, self.config.outputs()], t.pre.pop().unwrap())
    }

    /// Backpropagates `seed` (`[R, n_L]`, row `r` belonging to input `owner[r]`)
    /// and returns `deltas[l]`: `[R, n_{l+1}]`, the gradient w.r.t. `pre[l]`.
    fn deltas(&self, t: &Trace, seed: Vec<f64>, owner: &[usize]) -> Vec<Vec<f64>> {
        let w = &self.config.widths;
        let depth = w.len() - 1;
        let rows = owner.len();
        let mut out = vec![Vec::new(); depth];
        out[depth - 1] = seed;
        for l in (1..depth).rev() {
            let (fan_in, fan_out) = (w[l], w[l + 1]);
            let mut d = vec![0.0; rows * fan_in];
            gemm(rows, fan_in, fan_out, &out[l], &self.weights[l], &mut d);
            let scale = 1.0 / (fan_in as f64).sqrt();
            for (r, &i) in owner.iter().enumerate() {
                let mask = &t.pre[l - 1][i * fan_in..(i + 1) * fan_in];
                for (v, &m) in d[r * fan_in..(r + 1) * fan_in].iter_mut().zip(mask) {
                    *v = if m > 0.0 { *v * scale } else { 0.0 };
                }
            }
            out[l - 1] = d;
        }
        out
    }
}

/// `n_L·N × n_L·N` kernel; block `(i, j)` holds `K(x_i, x_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub inputs: usize,
    pub outputs: usize,
    pub data: Tensor,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.inputs * self.outputs
    }

    /// `K(x_i, x_j)[a, b]`
    pub fn entry(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.data.data()[(i * self.outputs + a) * self.dim() + j * self.outputs + b]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let d = self.data.data();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r + 1..n {
                worst = worst.max((d[r * n + c] - d[c * n + r]).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        let n = self.dim();
        (0..n).map(|i| self.data.data()[i * n + i]).sum()
    }

    /// Positive semidefinite with eigenvalues ≥ `−tol · trace`: Cholesky of `K + tol·trace·I` succeeds.
    pub fn is_psd(&self, tol: f64) -> bool {
        let n = self.dim();
        let shift = tol * self.trace().abs();
        let mut l = vec![0.0; n * n];
        let d = self.data.data();
        for i in 0..n {
            for j in 0..=i {
                let a = 0.5 * (d[i * n + j] + d[j * n + i]) + if i == j { shift } else { 0.0 };
                let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                if i == j {
                    let v = a - s;
                    if v < 0.0 {
                        return false;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = if l[j * n + j] > 0.0 { (a - s) / l[j * n + j] } else { 0.0 };
                }
            }
        }
        true
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.data)
    }
}

/// Rows of a rank-2 tensor as comma-separated values.
pub fn matrix_csv(m: &Tensor) -> String {
    let mut out = String::new();
    for r in 0..m.batch() {
        let row: Vec<String> = m.row(r).iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

const CHUNK_ENTRIES: usize = 1 << 22;

/// Gram matrix of exact parameter Jacobians over `inputs` (`[N, n_0]`).
///
/// Jacobian columns are materialised a block of parameters at a time and
/// accumulated into the Gram matrix, so memory stays bounded for wide nets.
#[allow(clippy::needless_range_loop)]
pub fn empirical_ntk(net: &NtkNet, inputs: &Tensor) -> Result<KernelMatrix> {
    let n = net.check_inputs(inputs)?;
    let cfg = &net.config;
    let outs = cfg.outputs();
    let rows = n * outs;
    let entries = net.param_count().saturating_mul(rows);
    if entries > cfg.budget {
        return Err(Error::ResourceLimit(format!(
            "Jacobian has {entries} entries, budget is {}",
            cfg.budget
        )));
    }
    let t = net.trace(inputs.data(), n);
    let owner: Vec<usize> = (0..rows).map(|r| r / outs).collect();
    let mut seed = vec![0.0; rows * outs];
    for r in 0..rows {
        seed[r * outs + r % outs] = 1.0;
    }
    let deltas = net.deltas(&t, seed, &owner);

    let mut gram = vec![0.0; rows * rows];
    let mut block = Vec::new();
    let accumulate = |block: &[f64], cols: usize, gram: &mut [f64]| {
        if cols == 0 {
            return;
        }
        let bt = transpose(block, rows, cols);
        let mut part = vec![0.0; rows * rows];
        gemm(rows, rows, cols, block, &bt, &mut part);
        gram.iter_mut().zip(&part).for_each(|(g, p)| *g += p);
    };
    for l in 0..cfg.depth() {
        let (fan_in, fan_out) = (cfg.widths[l], cfg.widths[l + 1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let units_per_chunk = (CHUNK_ENTRIES / (rows * fan_in)).max(1);
        for u0 in (0..fan_out).step_by(units_per_chunk) {
            let u1 = (u0 + units_per_chunk).min(fan_out);
            let cols = (u1 - u0) * fan_in;
            block.clear();
            block.resize(rows * cols, 0.0);
            for r in 0..rows {
                let a = &t.acts[l][owner[r] * fan_in..(owner[r] + 1) * fan_in];
                let d = &deltas[l][r * fan_out..(r + 1) * fan_out];
                let dst = &mut block[r * cols..(r + 1) * cols];
                for u in u0..u1 {
                    let du = d[u] * scale;
                    for (o, &av) in dst[(u - u0) * fan_in..(u - u0 + 1) * fan_in].iter_mut().zip(a) {
                        *o = du * av;
                    }
                }
            }
            accumulate(&block, cols, &mut gram);
        }
        if cfg.has_bias() {
            block.clear();
            for r in 0..rows {
                block.extend(deltas[l][r * fan_out..(r + 1) * fan_out].iter().map(|&d| cfg.beta * d));
            }
            accumulate(&block, fan_out, &mut gram);
        }
    }
    Ok(KernelMatrix { inputs: n, outputs: outs, data: Tensor::new(vec![rows, rows], gram)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NngpCovariance {
    pub beta: f64,
    pub mc_samples: usize,
    /// `Σ^(1) … Σ^(L)`, each `[N, N]`
    pub layers: Vec<Tensor>,
    /// Monte Carlo standard errors; zero for the closed-form first layer
    pub std_errors: Vec<Tensor>,
}

/// Relative tolerance below which a negative conditional variance is clamped to zero.
const PSD_TOLERANCE: f64 = 1e-9;

/// `E[relu(u) relu(v)]` for `(u, v) ~ N(0, [[a, c], [c, b]])` estimated from
/// standard-normal pairs `z`, returning `(mean, standard error)`.
fn relu_expectation(a: f64, b: f64, c: f64, z: &[(f64, f64)]) -> Result<(f64, f64)> {
    if a < 0.0 || b < 0.0 {
        return Err(Error::Numerical(format!("negative variance in covariance ({a}, {b})")));
    }
    if a == 0.0 || b == 0.0 {
        return Ok((0.0, 0.0));
    }
    let sa = a.sqrt();
    let slope = c / sa;
    let mut cond = b - slope * slope;
    if cond < 0.0 {
        if cond < -PSD_TOLERANCE * b {
            return Err(Error::Numerical(format!("covariance [[{a}, {c}], [{c}, {b}]] is not positive semidefinite")));
        }
        log::warn!("clamping conditional variance {cond} to 0");
        cond = 0.0;
    }
    let sc = cond.sqrt();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &(z1, z2) in z {
        let u = sa * z1;
        let v = slope * z1 + sc * z2;
        let p = u.max(0.0) * v.max(0.0);
        sum += p;
        sum_sq += p * p;
    }
    let m = z.len() as f64;
    let mean = sum / m;
    let var = if z.len() > 1 { ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
    Ok((mean, (var / m).sqrt()))
}

/// Layerwise NNGP covariances over `inputs` (`[N, n_0]`); layers past the first by Monte Carlo.
pub fn nngp_covariance(cfg: &NtkConfig, inputs: &Tensor, mc_samples: usize, rng: &mut impl Rng) -> Result<NngpCovariance> {
    cfg.validate()?;
    if mc_samples == 0 {
        return Err(config_err!("need at least one Monte Carlo sample"));
    }
    if inputs.rank() != 2 || inputs.dims()[1] != cfg.inputs() {
        return Err(shape_err!("NNGP inputs must be [N, {}], got {}", cfg.inputs(), inputs.shape()));
    }
    let n = inputs.dims()[0];
    let n0 = cfg.inputs() as f64;
    let b2 = cfg.beta * cfg.beta;
    let mut first = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = inputs.row(i).iter().zip(inputs.row(j)).map(|(a, b)| a * b).sum();
            first[i * n + j] = dot / n0 + b2;
        }
    }
    let mut layers = vec![Tensor::new(vec![n, n], first)?];
    let mut std_errors = vec![Tensor::zeros(vec![n, n])];
    for _ in 1..cfg.depth() {
        let z: Vec<(f64, f64)> = (0..mc_samples).map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let prev = layers.last().unwrap().data().to_vec();
        let mut next = vec![0.0; n * n];
        let mut se = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let (m, e) = relu_expectation(prev[i * n + i], prev[j * n + j], prev[i * n + j], &z)?;
                next[i * n + j] = m + b2;
                next[j * n + i] = m + b2;
                se[i * n + j] = e;
                se[j * n + i] = e;
            }
        }
        layers.push(Tensor::new(vec![n, n], next)?);
        std_errors.push(Tensor::new(vec![n, n], se)?);
    }
    Ok(NngpCovariance { beta: cfg.beta, mc_samples, layers, std_errors })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthStudyConfig {
    pub depth: usize,
    pub outputs: usize,
    pub widths: Vec<usize>,
    pub seeds: usize,
    /// β of the comparison ensemble at the largest width
    pub beta_compare: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthStats {
    pub width: usize,
    pub mean_kernel: Tensor,
    /// across-seed sample standard deviation per entry
    pub std_kernel: Tensor,
    pub mean_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthStudy {
    pub config: WidthStudyConfig,
    pub per_width: Vec<WidthStats>,
    /// mean per-entry standard deviation decreases with width, allowing one inversion
    pub std_decreasing: bool,
    /// mean per-entry standard deviation strictly decreases at every step
    pub std_strictly_decreasing: bool,
    /// fraction of entries whose std at the largest width is below that at the smallest
    pub entries_narrowing: f64,
    /// Frobenius distance between the β = 0 and β = `beta_compare` mean kernels
    pub beta_distance: f64,
    /// Frobenius distance between two independent β = 0 ensembles
    pub twin_distance: f64,
    /// Frobenius norm of the per-entry standard error of that difference
    pub twin_noise: f64,
    pub twins_within_noise: bool,
}

struct Ensemble {
    mean: Vec<f64>,
    std: Vec<f64>,
    dim: usize,
}

fn ensemble(cfg: &NtkConfig, inputs: &Tensor, seeds: std::ops::Range<u64>) -> Result<Ensemble> {
    let mut kernels = Vec::new();
    for seed in seeds {
        let net = NtkNet::sample(cfg, &mut seeded_rng(seed, NTK_STREAM))?;
        kernels.push(empirical_ntk(&net, inputs)?);
    }
    let dim = kernels[0].dim();
    let count = kernels.len() as f64;
    let mut mean = vec![0.0; dim * dim];
    for k in &kernels {
        mean.iter_mut().zip(k.data.data()).for_each(|(m, v)| *m += v / count);
    }
    let mut std = vec![0.0; dim * dim];
    if kernels.len() > 1 {
        for k in &kernels {
            std.iter_mut().zip(k.data.data()).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2));
        }
        std.iter_mut().for_each(|s| *s = (*s / (count - 1.0)).sqrt());
    }
    Ok(Ensemble { mean, std, dim })
}

fn frobenius(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Across-seed spread of the empirical kernel as width grows (β = 0 ensembles).
pub fn width_convergence_study(study: &WidthStudyConfig, inputs: &Tensor) -> Result<WidthStudy> {
    if study.widths.is_empty() || study.seeds == 0 || study.depth == 0 || study.outputs == 0 {
        return Err(config_err!("width study needs widths, seeds, depth and outputs, got {study:?}"));
    }
    let n0 = inputs.dims().get(1).copied().unwrap_or(0);
    let make = |width: usize, beta: f64| {
        let mut widths = vec![n0];
        widths.extend(std::iter::repeat_n(width, study.depth - 1));
        widths.push(study.outputs);
        NtkConfig::new(widths, beta)
    };
    let seeds = study.seeds as u64;
    let mut per_width = Vec::new();
    let mut last = None;
    for &width in &study.widths {
        let e = ensemble(&make(width, 0.0)?, inputs, 0..seeds)?;
        let mean_std = e.std.iter().sum::<f64>() / e.std.len() as f64;
        per_width.push(WidthStats {
            width,
            mean_kernel: Tensor::new(vec![e.dim, e.dim], e.mean.clone())?,
            std_kernel: Tensor::new(vec![e.dim, e.dim], e.std.clone())?,
            mean_std,
        });
        last = Some(e);
    }
    let widest = last.unwrap();
    let top = *study.widths.last().unwrap();
    let compare = ensemble(&make(top, study.beta_compare)?, inputs, 0..seeds)?;
    let twin = ensemble(&make(top, 0.0)?, inputs, seeds..2 * seeds)?;
    let noise: f64 = widest
        .std
        .iter()
        .zip(&twin.std)
        .map(|(a, b)| (a * a + b * b) / seeds as f64)
        .sum::<f64>()
        .sqrt();
    let twin_distance = frobenius(&widest.mean, &twin.mean);

    let stds: Vec<f64> = per_width.iter().map(|w| w.mean_std).collect();
    let inversions = stds.windows(2).filter(|w| w[1] >= w[0]).count();
    let first = &per_width[0].std_kernel;
    let last_std = &per_width[per_width.len() - 1].std_kernel;
    let narrowing = first.data().iter().zip(last_std.data()).filter(|(a, b)| b < a).count();
    Ok(WidthStudy {
        config: study.clone(),
        std_decreasing: per_width.len() >= 2 && inversions <= 1,
        std_strictly_decreasing: per_width.len() >= 2 && inversions == 0,
        entries_narrowing: narrowing as f64 / first.len() as f64,
        per_width,
        beta_distance: frobenius(&widest.mean, &compare.mean),
        twin_distance,
        twin_noise: noise,
        twins_within_noise: twin_distance <= 3.0 * noise,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub beta: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub width: usize,
    /// `‖K_T − K_0‖_F / ‖K_0‖_F`
    pub relative_drift: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub config: DriftConfig,
    pub points: Vec<DriftPoint>,
    pub drift_decreasing: bool,
}

fn mse(out: &[f64], targets: &[f64], n: usize) -> f64 {
    out.iter().zip(targets).map(|(o, y)| (o - y).powi(2)).sum::<f64>() / (2.0 * n as f64)
}

/// Full-batch gradient descent on `½·mean ‖f(x) − y‖²`; returns the per-step losses.
pub fn gradient_descent(net: &mut NtkNet, inputs: &Tensor, targets: &Tensor, steps: usize, lr: f64) -> Result<Vec<f64>> {
    let n = net.check_inputs(inputs)?;
    let outs = net.config.outputs();
    if targets.dims() != [n, outs] {
        return Err(shape_err!("targets must be [{n}, {outs}], got {}", targets.shape()));
    }
    let owner: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let t = net.trace(inputs.data(), n);
        let out = t.pre.last().unwrap();
        losses.push(mse(out, targets.data(), n));
        let seed: Vec<f64> = out.iter().zip(targets.data()).map(|(o, y)| (o - y) / n as f64).collect();
        let deltas = net.deltas(&t, seed, &owner);
        let cfg = net.config.clone();
        for l in 0..cfg.depth() {
            let (fan_in, fan_out) = (cfg.widths[l], cfg.widths[l + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            // dW = Δᵀ A / √n_l
            let dt = transpose(&deltas[l], n, fan_out);
            let mut gw = vec![0.0; fan_out * fan_in];
            gemm(fan_out, fan_in, n, &dt, &t.acts[l], &mut gw);
            net.weights[l].iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * scale * g);
            if let Some(b) = &mut net.biases {
                for u in 0..fan_out {
                    let g: f64 = (0..n).map(|i| deltas[l][i * fan_out + u]).sum();
                    b[l][u] -= lr * cfg.beta * g;
                }
            }
        }
    }
    let out = net.forward(inputs)?;
    losses.push(mse(out.data(), targets.data(), n));
    Ok(losses)
}

/// Kernel drift over `steps` of gradient descent, per width.
pub fn training_drift_study(cfg: &DriftConfig, inputs: &Tensor, targets: &Tensor) -> Result<DriftReport> {
    if cfg.widths.is_empty() || cfg.depth == 0 {
        return Err(config_err!("drift study needs at least one width and depth ≥ 1"));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(config_err!("learning rate must be finite and non-negative"));
    }
    let n0 = inputs.dims().get(1).copied().unwrap_or(0);
    let outs = targets.dims().get(1).copied().unwrap_or(0);
    let mut points = Vec::new();
    for &width in &cfg.widths {
        let mut widths = vec![n0];
        widths.extend(std::iter::repeat_n(width, cfg.depth - 1));
        widths.push(outs);
        let ncfg = NtkConfig::new(widths, cfg.beta)?;
        let mut net = NtkNet::sample(&ncfg, &mut seeded_rng(cfg.seed, NTK_STREAM))?;
        let k0 = empirical_ntk(&net, inputs)?;
        let losses = gradient_descent(&mut net, inputs, targets, cfg.steps, cfg.learning_rate)?;
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numerical(format!("loss diverged at width {width}")));
        }
        let k1 = empirical_ntk(&net, inputs)?;
        let norm0 = k0.data.norm();
        let relative_drift = frobenius(k1.data.data(), k0.data.data()) / norm0;
        points.push(DriftPoint {
            width,
            relative_drift,
            initial_loss: losses[0],
            final_loss: *losses.last().unwrap(),
        });
    }
    let drift_decreasing = points.len() >= 2 && points.last().unwrap().relative_drift < points[0].relative_drift;
    Ok(DriftReport { config: cfg.clone(), points, drift_decreasing })
}

#[cfg(test)]
mod tests;
