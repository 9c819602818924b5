use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use zbnn::datasets::{load_mnist_dir, make_ray_dataset, LabeledDataset, MnistFiles, DEFAULT_SWEEP};
use zbnn::geometry::{rasterize_regions, ray_profile, Bounds};
use zbnn::io::write_atomic;
use zbnn::network::{load_checkpoint, save_checkpoint};
use zbnn::ntk::{training_drift_study, width_convergence_study, DriftConfig, DriftReport, WidthStudy, WidthStudyConfig};
use zbnn::training::{evaluate_accuracy, seeded_rng, train as train_network, DATA_STREAM, INIT_STREAM};
use zbnn::verify::{
    certify_convex, certify_directional, certify_interpolation, fairness_zero_image, interpolation_strip_pgm, replay,
    search_same_nap_pairs, Certificate, NapSearch, Verdict,
};
use zbnn::{Network, Tensor};

use crate::config::{DataConfig, ModelConfig, RunConfig};
use crate::manifest::{sibling, write_report, RunManifest};
use crate::{
    CertifyArgs, CertifyMode, Failure, FairnessArgs, NapSearchArgs, NtkArgs, RayArgs, RegionsArgs, SweepArgs, TrainArgs,
    EXIT_FALSIFIED, EXIT_INAPPLICABLE, EXIT_INVARIANCE,
};

type Status = Result<u8, Failure>;

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8], m: &mut RunManifest) -> Result<(), Failure> {
    write_atomic(path, bytes)?;
    m.output(path);
    Ok(())
}

fn write_json_report<T: Serialize>(path: &Path, body: &T, m: &mut RunManifest) -> Result<(), Failure> {
    write_report(path, body)?;
    m.output(path);
    Ok(())
}

fn open_checkpoint(path: &Path, m: &mut RunManifest) -> Result<Network, Failure> {
    if !path.is_file() {
        return Err(Failure::io(format!("checkpoint {} not found", path.display())));
    }
    m.input(path)?;
    Ok(load_checkpoint(path)?)
}

fn open_mnist(dir: &Path, m: &mut RunManifest) -> Result<(LabeledDataset, LabeledDataset), Failure> {
    if !dir.is_dir() {
        return Err(Failure::io(format!("data directory {} not found", dir.display())));
    }
    for file in MnistFiles::in_dir(dir).all() {
        if !file.is_file() {
            return Err(Failure::io(format!("missing {}", file.display())));
        }
        m.input(file)?;
    }
    Ok(load_mnist_dir(dir)?)
}

fn is_zero_bias(net: &Network) -> bool {
    net.zero_bias && net.has_no_bias()
}

fn check_scalars(scalars: &[f64]) -> Result<(), Failure> {
    if scalars.is_empty() || scalars.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Failure::usage(format!("scalars must be positive and finite, got {scalars:?}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    config_file: &'a Path,
    data: Option<&'a Path>,
    out: &'a Path,
    resolved: &'a RunConfig,
}

pub fn train(a: &TrainArgs, m: &mut RunManifest) -> Status {
    let text = String::from_utf8(read_file(&a.config)?).map_err(|_| Failure::usage("config is not UTF-8"))?;
    m.input(&a.config)?;
    let cfg = RunConfig::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", a.config.display())))?;
    m.set_config(&TrainEcho { config_file: &a.config, data: a.data.as_deref(), out: &a.out, resolved: &cfg });

    let (train_set, test_set, outputs) = match &cfg.data {
        DataConfig::Mnist { train_limit, test_limit } => {
            let dir = a.data.as_deref().ok_or_else(|| Failure::usage("MNIST data needs --data <dir>"))?;
            let (tr, te) = open_mnist(dir, m)?;
            let tr = tr.head(train_limit.unwrap_or(usize::MAX));
            let te = te.head(test_limit.unwrap_or(usize::MAX));
            let dims: &[usize] = match cfg.model {
                ModelConfig::Fcn { .. } => &[784],
                ModelConfig::Cnn { .. } => &[1, 28, 28],
            };
            let classes = tr.class_count;
            (tr.reshaped(dims)?, te.reshaped(dims)?, classes)
        }
        DataConfig::Rays { variant, rays, per_ray, seed } => {
            let ds = make_ray_dataset(*variant, *rays, *per_ray, &mut seeded_rng(*seed, DATA_STREAM))?.to_labeled();
            (ds.clone(), ds, 1)
        }
    };
    let inputs: usize = train_set.sample_dims().iter().product();
    let mut net = match &cfg.model {
        ModelConfig::Fcn { hidden, bias } => Network::fcn("fcn", inputs, hidden, outputs, *bias)?,
        ModelConfig::Cnn { bias } => Network::cnn28("cnn", outputs, *bias)?,
    };
    net.initialize_he(&mut seeded_rng(cfg.train.seed, INIT_STREAM));
    net.provenance["config"] = serde_json::to_value(&cfg).unwrap_or_default();

    let mut run = train_network(&mut net, &train_set, &test_set, &cfg.train)?;
    save_checkpoint(&net, &a.out)?;
    m.output(&a.out);
    run.checkpoint = Some(a.out.clone());
    write_json_report(&sibling(&a.out, "run.json"), &run, m)?;
    let mut csv = String::from("epoch,train_loss,test_accuracy\n");
    for (e, (loss, acc)) in run.train_loss.iter().zip(&run.test_accuracy).enumerate() {
        csv.push_str(&format!("{},{loss},{acc}\n", e + 1));
    }
    write_bytes(&sibling(&a.out, "trajectory.csv"), csv.as_bytes(), m)?;
    log::info!("final test accuracy {:.4}", run.final_accuracy());
    Ok(0)
}

#[derive(Serialize)]
struct SweepRow {
    scalar: f64,
    accuracy: f64,
}

#[derive(Serialize)]
struct SweepReport {
    network_digest: String,
    zero_bias: bool,
    samples: usize,
    rows: Vec<SweepRow>,
    /// every accuracy bitwise equal to the first
    invariant: bool,
}

pub fn scalar_sweep(a: &SweepArgs, m: &mut RunManifest) -> Status {
    let scalars = a.scalars.clone().unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    check_scalars(&scalars)?;
    m.set_config(&serde_json::json!({ "ckpt": a.ckpt, "data": a.data, "scalars": scalars, "limit": a.limit, "out": a.out }));
    let net = open_checkpoint(&a.ckpt, m)?;
    let (_, test) = open_mnist(&a.data, m)?;
    let test = test.head(a.limit.unwrap_or(usize::MAX)).reshaped(&net.input_shape)?;
    let rows = scalars
        .iter()
        .map(|&scalar| Ok(SweepRow { scalar, accuracy: evaluate_accuracy(&net, &test.scaled(scalar))? }))
        .collect::<Result<Vec<_>, Failure>>()?;
    let invariant = rows.iter().all(|r| r.accuracy.to_bits() == rows[0].accuracy.to_bits());
    let report = SweepReport { network_digest: net.digest(), zero_bias: is_zero_bias(&net), samples: test.len(), rows, invariant };
    write_json_report(&a.out, &report, m)?;
    let mut csv = String::from("scalar,accuracy\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{}\n", r.scalar, r.accuracy));
    }
    write_bytes(&a.out.with_extension("csv"), csv.as_bytes(), m)?;
    if report.zero_bias && !invariant {
        log::error!("zero-bias checkpoint changed accuracy under scaling");
        return Ok(EXIT_INVARIANCE);
    }
    Ok(0)
}

fn parse_values(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::usage(format!("not a number: {v:?}"))))
        .collect()
}

fn certify_inputs(a: &CertifyArgs, net: &Network, m: &mut RunManifest) -> Result<Vec<Tensor>, Failure> {
    let mut raw = Vec::new();
    for p in &a.point {
        raw.push(parse_values(p)?);
    }
    for path in &a.input {
        let values: Vec<f64> = serde_json::from_slice(&read_file(path)?)
            .map_err(|e| Failure::usage(format!("{} is not a JSON number array: {e}", path.display())))?;
        m.input(path)?;
        raw.push(values);
    }
    if !a.index.is_empty() {
        let dir = a.data.as_deref().ok_or_else(|| Failure::usage("--index needs --data <dir>"))?;
        let (_, test) = open_mnist(dir, m)?;
        for &i in &a.index {
            if i >= test.len() {
                return Err(Failure::usage(format!("index {i} outside the {}-image test set", test.len())));
            }
            raw.push(test.inputs.row(i).to_vec());
        }
    }
    raw.into_iter().map(|v| Ok(Tensor::new(net.input_shape.clone(), v)?)).collect()
}

fn verdict_status(cert: &Certificate) -> u8 {
    match cert.verdict {
        Verdict::Certified => 0,
        Verdict::Falsified { .. } => EXIT_FALSIFIED,
        Verdict::Inapplicable { .. } => EXIT_INAPPLICABLE,
    }
}

pub fn certify(a: &CertifyArgs, m: &mut RunManifest) -> Status {
    m.set_config(&serde_json::json!({
        "ckpt": a.ckpt, "mode": a.mode.map(|k| format!("{k:?}").to_lowercase()), "points": a.point, "inputs": a.input,
        "indices": a.index, "data": a.data, "scalars": a.scalars, "lambdas": a.lambdas, "samples": a.samples,
        "seed": a.seed, "replay": a.replay, "out": a.out,
    }));
    let net = open_checkpoint(&a.ckpt, m)?;
    let cert = if let Some(path) = &a.replay {
        let stored: Certificate = serde_json::from_slice(&read_file(path)?)
            .map_err(|e| Failure::usage(format!("{} is not a certificate: {e}", path.display())))?;
        m.input(path)?;
        replay(&net, &stored)?
    } else {
        let inputs = certify_inputs(a, &net, m)?;
        let mode = a.mode.ok_or_else(|| Failure::usage("--mode is required"))?;
        match mode {
            CertifyMode::Directional => {
                let [x] = inputs.as_slice() else {
                    return Err(Failure::usage(format!("directional mode takes 1 input, got {}", inputs.len())));
                };
                let scalars = a.scalars.clone().unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
                check_scalars(&scalars)?;
                certify_directional(&net, x, &scalars)?
            }
            CertifyMode::Interpolation => {
                let [x1, x2] = inputs.as_slice() else {
                    return Err(Failure::usage(format!("interpolation mode takes 2 inputs, got {}", inputs.len())));
                };
                certify_interpolation(&net, x1, x2, a.lambdas)?
            }
            CertifyMode::Convex => {
                if inputs.len() < 2 {
                    return Err(Failure::usage(format!("convex mode takes at least 2 vertices, got {}", inputs.len())));
                }
                if a.samples == 0 {
                    return Err(Failure::usage("convex mode needs at least one sample"));
                }
                certify_convex(&net, &inputs, a.samples, &mut seeded_rng(a.seed, DATA_STREAM))?
            }
        }
    };
    write_json_report(&a.out, &cert, m)?;
    log::info!("verdict: {}", cert.verdict.label());
    Ok(verdict_status(&cert))
}

pub fn fairness(a: &FairnessArgs, m: &mut RunManifest) -> Status {
    m.set_config(&serde_json::json!({ "ckpt": a.ckpt, "out": a.out }));
    let net = open_checkpoint(&a.ckpt, m)?;
    let report = fairness_zero_image(&net)?;
    write_json_report(&a.out, &report, m)?;
    log::info!("max deviation from uniform: {:e}", report.max_deviation);
    if report.zero_bias && report.max_deviation > 1e-12 {
        return Ok(EXIT_INVARIANCE);
    }
    Ok(0)
}

pub fn regions(a: &RegionsArgs, m: &mut RunManifest) -> Status {
    let bounds = match a.bounds.as_deref() {
        None => Bounds::default(),
        Some(&[x_min, x_max, y_min, y_max]) => Bounds { x_min, x_max, y_min, y_max },
        Some(other) => return Err(Failure::usage(format!("--bounds takes 4 values, got {}", other.len()))),
    };
    m.set_config(&serde_json::json!({ "ckpt": a.ckpt, "bounds": bounds, "resolution": a.resolution, "csv": a.csv, "out": a.out }));
    let net = open_checkpoint(&a.ckpt, m)?;
    let raster = rasterize_regions(&net, bounds, a.resolution, a.resolution)?;
    write_bytes(&a.out, &raster.to_ppm(), m)?;
    let summary = raster.summary();
    write_json_report(&sibling(&a.out, "json"), &summary, m)?;
    if a.csv {
        write_bytes(&sibling(&a.out, "csv"), raster.to_csv().as_bytes(), m)?;
    }
    log::info!("{} regions, {} bounded", summary.region_count, summary.bounded_region_count);
    Ok(0)
}

pub fn ray(a: &RayArgs, m: &mut RunManifest) -> Status {
    let [dx, dy] = a.direction.as_slice() else {
        return Err(Failure::usage(format!("--direction takes 2 values, got {}", a.direction.len())));
    };
    let norm = dx.hypot(*dy);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Failure::usage("direction must be a finite non-zero vector"));
    }
    let d = [dx / norm, dy / norm];
    let radii = match &a.radii {
        Some(r) => r.clone(),
        None => {
            if a.steps == 0 || !(a.r_max > 0.0) {
                return Err(Failure::usage("--steps and --r-max must be positive"));
            }
            (1..=a.steps).map(|k| a.r_max * k as f64 / a.steps as f64).collect()
        }
    };
    m.set_config(&serde_json::json!({ "ckpt": a.ckpt, "direction": d, "radii": radii, "out": a.out }));
    let net = open_checkpoint(&a.ckpt, m)?;
    let profile = ray_profile(&net, d, &radii)?;
    write_bytes(&a.out, profile.to_csv().as_bytes(), m)?;
    if is_zero_bias(&net) {
        let unit = net.logits(&Tensor::vector(d.to_vec()))?.into_data();
        for (r, logits) in profile.radii.iter().zip(&profile.logits) {
            let scale = unit.iter().fold(0.0f64, |s, u| s.max((r * u).abs()));
            let err = logits.iter().zip(&unit).fold(0.0f64, |e, (z, u)| e.max((z - r * u).abs()));
            if err > 1e-10 * scale {
                log::error!("logit at radius {r} departs from linear scaling by {err:e}");
                return Ok(EXIT_INVARIANCE);
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct PairCheck {
    first: usize,
    second: usize,
    verdict: &'static str,
}

#[derive(Serialize)]
struct NapSearchReport {
    network_digest: String,
    samples: usize,
    same_class_required: bool,
    #[serde(flatten)]
    search: NapSearch,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    certificates: Vec<PairCheck>,
}

pub fn nap_search(a: &NapSearchArgs, m: &mut RunManifest) -> Status {
    m.set_config(&serde_json::json!({
        "ckpt": a.ckpt, "data": a.data, "limit": a.limit, "test_limit": a.test_limit, "any_class": a.any_class,
        "certify": a.certify, "strips": a.strips, "out": a.out,
    }));
    let net = open_checkpoint(&a.ckpt, m)?;
    let (_, test) = open_mnist(&a.data, m)?;
    let test = test.head(a.test_limit.unwrap_or(usize::MAX)).reshaped(&net.input_shape)?;
    let search = search_same_nap_pairs(&net, &test, !a.any_class, a.limit)?;
    let mut status = 0;
    let mut certificates = Vec::new();
    if let Some(count) = a.certify {
        for p in &search.pairs {
            let cert = certify_interpolation(&net, &test.sample(p.first), &test.sample(p.second), count)?;
            status = status.max(verdict_status(&cert));
            certificates.push(PairCheck { first: p.first, second: p.second, verdict: cert.verdict.label() });
        }
    }
    if let Some(dir) = &a.strips {
        if net.input_len() != 784 {
            return Err(Failure::usage("strips need 28×28 inputs"));
        }
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
        for p in &search.pairs {
            let pgm = interpolation_strip_pgm(&test.sample(p.first), &test.sample(p.second), 0.5, 28, 28)?;
            write_bytes(&dir.join(format!("pair_{}_{}.pgm", p.first, p.second)), &pgm, m)?;
        }
    }
    log::info!("{} pairs among {} distinct patterns", search.pairs.len(), search.distinct_patterns);
    let report = NapSearchReport { network_digest: net.digest(), samples: test.len(), same_class_required: !a.any_class, search, certificates };
    write_json_report(&a.out, &report, m)?;
    Ok(status)
}

#[derive(Serialize)]
struct NtkReport {
    inputs: usize,
    input_dim: usize,
    source: &'static str,
    study: WidthStudy,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<DriftReport>,
}

pub fn ntk(a: &NtkArgs, m: &mut RunManifest) -> Status {
    let study_cfg =
        WidthStudyConfig { depth: a.depth, outputs: a.outputs, widths: a.widths.clone(), seeds: a.seeds, beta_compare: a.beta_compare };
    m.set_config(&serde_json::json!({
        "study": study_cfg, "count": a.count, "data": a.data, "input_dim": a.input_dim, "seed": a.seed,
        "drift_steps": a.drift_steps, "drift_lr": a.drift_lr, "out": a.out,
    }));
    if a.count == 0 {
        return Err(Failure::usage("--count must be positive"));
    }
    let (inputs, targets, source) = match &a.data {
        Some(dir) => {
            let (_, test) = open_mnist(dir, m)?;
            let sub = test.head(a.count).reshaped(&[784])?;
            let y: Vec<f64> = sub.labels.iter().map(|&l| if l >= 5 { 1.0 } else { -1.0 }).collect();
            (sub.inputs, y, "mnist")
        }
        None => {
            let mut rng = seeded_rng(a.seed, DATA_STREAM);
            let x: Vec<f64> = (0..a.count * a.input_dim).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..a.count).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            (Tensor::new(vec![a.count, a.input_dim], x)?, y, "gaussian")
        }
    };
    let study = width_convergence_study(&study_cfg, &inputs)?;
    let drift = if a.drift_steps > 0 {
        let cfg = DriftConfig {
            depth: a.depth,
            widths: a.widths.clone(),
            beta: 0.0,
            steps: a.drift_steps,
            learning_rate: a.drift_lr,
            seed: a.seed,
        };
        Some(training_drift_study(&cfg, &inputs, &Tensor::new(vec![a.count, 1], targets)?)?)
    } else {
        None
    };
    let mut csv = String::from("width,mean_std\n");
    for w in &study.per_width {
        csv.push_str(&format!("{},{}\n", w.width, w.mean_std));
    }
    let report = NtkReport { inputs: a.count, input_dim: inputs.dims()[1], source, study, drift };
    write_json_report(&a.out, &report, m)?;
    write_bytes(&sibling(&a.out, "csv"), csv.as_bytes(), m)?;
    Ok(0)
}

