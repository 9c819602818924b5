use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::nap::{evaluate_points, Evaluation, ZERO_THRESHOLD_CONVENTION};
use crate::error::{config_err, shape_err, Result};
use crate::io::sha256_hex;
use crate::network::Network;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Directional,
    Interpolation,
    Convex,
}

/// The checked family of points, enough to replay the certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CertificateParams {
    /// points `s·x`
    Directional { scalars: Vec<f64> },
    /// points `λ·x1 + (1−λ)·x2`
    Interpolation { lambdas: Vec<f64> },
    /// points `Σ w_i v_i`, one weight row per sample
    Convex { weights: Vec<Vec<f64>> },
}

impl CertificateParams {
    pub fn kind(&self) -> CertificateKind {
        match self {
            CertificateParams::Directional { .. } => CertificateKind::Directional,
            CertificateParams::Interpolation { .. } => CertificateKind::Interpolation,
            CertificateParams::Convex { .. } => CertificateKind::Convex,
        }
    }

    fn len(&self) -> usize {
        match self {
            CertificateParams::Directional { scalars } => scalars.len(),
            CertificateParams::Interpolation { lambdas } => lambdas.len(),
            CertificateParams::Convex { weights } => weights.len(),
        }
    }

    fn coefficients(&self, i: usize) -> Vec<f64> {
        match self {
            CertificateParams::Directional { scalars } => vec![scalars[i]],
            CertificateParams::Interpolation { lambdas } => vec![lambdas[i]],
            CertificateParams::Convex { weights } => weights[i].clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub digest: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Witness {
    pub fn new(x: &Tensor) -> Witness {
        let bytes: Vec<u8> = x.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        Witness { digest: sha256_hex(&bytes), dims: x.dims().to_vec(), data: x.data().to_vec() }
    }

    pub fn tensor(&self) -> Result<Tensor> {
        Tensor::new(self.dims.clone(), self.data.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// scalar, λ or convex weights that produced the point
    pub coefficients: Vec<f64>,
    pub point: Vec<f64>,
    pub expected_class: usize,
    pub observed_class: usize,
    pub nap_changed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Falsified { counterexample: Box<Counterexample> },
    Inapplicable { reason: String },
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Falsified { .. } => "falsified",
            Verdict::Inapplicable { .. } => "inapplicable",
        }
    }
}

/// One evaluated point of the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub coefficients: Vec<f64>,
    pub class: usize,
    pub nap_digest: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub network_digest: String,
    pub witnesses: Vec<Witness>,
    pub parameters: CertificateParams,
    pub verdict: Verdict,
    /// witness class and NAP digest per witness, then one entry per checked point
    pub evidence: Vec<Check>,
    pub convention: String,
}

fn is_zero_bias(net: &Network) -> bool {
    net.zero_bias && net.has_no_bias()
}

fn point(params: &CertificateParams, i: usize, witnesses: &[Tensor]) -> Tensor {
    match params {
        CertificateParams::Directional { scalars } => witnesses[0].scale(scalars[i]),
        CertificateParams::Interpolation { lambdas } => {
            let l = lambdas[i];
            witnesses[0].zip_map(&witnesses[1], |a, b| l * a + (1.0 - l) * b).expect("witness shapes checked")
        }
        CertificateParams::Convex { weights } => {
            let mut acc = witnesses[0].scale(weights[i][0]);
            for (w, v) in weights[i].iter().zip(witnesses).skip(1) {
                acc.axpy(*w, v).expect("witness shapes checked");
            }
            acc
        }
    }
}

fn check_params(params: &CertificateParams, witness_count: usize) -> Result<()> {
    match params {
        CertificateParams::Directional { scalars } => {
            if witness_count != 1 {
                return Err(config_err!("directional certificate takes one input, got {witness_count}"));
            }
            if let Some(s) = scalars.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
                return Err(config_err!("scalars must be positive, got {s}"));
            }
        }
        CertificateParams::Interpolation { lambdas } => {
            if witness_count != 2 {
                return Err(config_err!("interpolation certificate takes two inputs, got {witness_count}"));
            }
            if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(config_err!("interpolation weights must lie in [0, 1]"));
            }
        }
        CertificateParams::Convex { weights } => {
            if witness_count < 2 {
                return Err(config_err!("convex certificate needs at least 2 vertices, got {witness_count}"));
            }
            for w in weights {
                if w.len() != witness_count || w.iter().any(|&v| v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(config_err!("convex weights must be {witness_count} non-negative values summing to 1"));
                }
            }
        }
    }
    Ok(())
}

/// Evaluates `params` over the witnesses and produces the certificate.
fn issue(net: &Network, witnesses: &[Tensor], params: CertificateParams) -> Result<Certificate> {
    check_params(&params, witnesses.len())?;
    for w in witnesses {
        if w.dims() != net.input_shape.as_slice() {
            return Err(shape_err!("witness {} does not match network input {:?}", w.shape(), net.input_shape));
        }
    }
    let kind = params.kind();
    let mut cert = Certificate {
        kind,
        network_digest: net.digest(),
        witnesses: witnesses.iter().map(Witness::new).collect(),
        parameters: params,
        verdict: Verdict::Certified,
        evidence: Vec::new(),
        convention: ZERO_THRESHOLD_CONVENTION.to_string(),
    };
    if !is_zero_bias(net) {
        cert.verdict = Verdict::Inapplicable { reason: format!("network {} is not zero-bias", net.name) };
        return Ok(cert);
    }

    let stacked = stack(witnesses)?;
    let base: Vec<Evaluation> = evaluate_points(net, &stacked)?;
    for (i, e) in base.iter().enumerate() {
        cert.evidence.push(Check { coefficients: vec![i as f64], class: e.class, nap_digest: e.nap.digest(), passed: true });
    }
    let reference = base[0].clone();
    // Directional checks only need the class; segment and hull checks need a shared class and NAP.
    let check_nap = kind != CertificateKind::Directional;
    if check_nap {
        if let Some(i) = base.iter().position(|e| e.class != reference.class) {
            cert.verdict = Verdict::Inapplicable {
                reason: format!("witness {i} predicts class {} but witness 0 predicts {}", base[i].class, reference.class),
            };
            return Ok(cert);
        }
        if let Some(i) = base.iter().position(|e| e.nap != reference.nap) {
            cert.verdict = Verdict::Inapplicable {
                reason: format!("witness {i} differs from witness 0 in {} activation sites", base[i].nap.hamming(&reference.nap)),
            };
            return Ok(cert);
        }
    }

    let n = cert.parameters.len();
    let points: Vec<Tensor> = (0..n).map(|i| point(&cert.parameters, i, witnesses)).collect();
    let evals = if n == 0 { Vec::new() } else { evaluate_points(net, &stack(&points)?)? };
    for (i, e) in evals.iter().enumerate() {
        let nap_changed = e.nap != reference.nap;
        let passed = e.class == reference.class && !(check_nap && nap_changed);
        let coefficients = cert.parameters.coefficients(i);
        if !passed && cert.verdict.is_certified() {
            cert.verdict = Verdict::Falsified {
                counterexample: Box::new(Counterexample {
                    coefficients: coefficients.clone(),
                    point: points[i].data().to_vec(),
                    expected_class: reference.class,
                    observed_class: e.class,
                    nap_changed,
                }),
            };
        }
        cert.evidence.push(Check { coefficients, class: e.class, nap_digest: e.nap.digest(), passed });
    }
    Ok(cert)
}

fn stack(items: &[Tensor]) -> Result<Tensor> {
    let mut dims = vec![items.len()];
    dims.extend_from_slice(items[0].dims());
    let data: Vec<f64> = items.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(dims, data)
}

/// Checks that every positive rescaling of `x` keeps the class.
pub fn certify_directional(net: &Network, x: &Tensor, scalars: &[f64]) -> Result<Certificate> {
    issue(net, std::slice::from_ref(x), CertificateParams::Directional { scalars: scalars.to_vec() })
}

/// `λ_k = k / (count − 1)`, endpoints included.
pub fn lambda_grid(count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(config_err!("interpolation needs at least 2 grid points, got {count}"));
    }
    Ok((0..count).map(|k| k as f64 / (count - 1) as f64).collect())
}

/// Checks class and NAP along the segment between two same-class, same-NAP inputs.
pub fn certify_interpolation(net: &Network, x1: &Tensor, x2: &Tensor, lambda_count: usize) -> Result<Certificate> {
    issue(net, &[x1.clone(), x2.clone()], CertificateParams::Interpolation { lambdas: lambda_grid(lambda_count)? })
}

/// Weights drawn from the flat Dirichlet distribution over `vertices` corners.
pub fn simplex_weights(vertices: usize, samples: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|_| {
            let raw: Vec<f64> = (0..vertices).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

/// Samples the convex hull of same-class, same-NAP vertices.
pub fn certify_convex(net: &Network, vertices: &[Tensor], samples: usize, rng: &mut impl Rng) -> Result<Certificate> {
    if vertices.len() < 2 {
        return Err(config_err!("convex certificate needs at least 2 vertices, got {}", vertices.len()));
    }
    let weights = simplex_weights(vertices.len(), samples, rng);
    issue(net, vertices, CertificateParams::Convex { weights })
}

/// Re-runs a certificate against `net` and returns the fresh copy.
pub fn replay(net: &Network, cert: &Certificate) -> Result<Certificate> {
    let digest = net.digest();
    if digest != cert.network_digest {
        return Err(config_err!("certificate was issued for network {}, not {digest}", cert.network_digest));
    }
    let witnesses: Vec<Tensor> = cert.witnesses.iter().map(Witness::tensor).collect::<Result<_>>()?;
    issue(net, &witnesses, cert.parameters.clone())
}
