use crate::error::{shape_err, Error, Result};
use crate::numerics::Tensor;

/// Mean softmax cross-entropy over a batch and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.batch() != labels.len() {
        return Err(shape_err!("logits {} vs {} labels", logits.shape(), labels.len()));
    }
    let (batch, classes) = (logits.dims()[0], logits.dims()[1]);
    let mut grad = vec![0.0; batch * classes];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidLabel { label, classes });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        total += log_norm - row[label];
        let g = &mut grad[i * classes..(i + 1) * classes];
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - log_norm).exp();
            *gv = (p - if c == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((total / batch as f64, Tensor::new(vec![batch, classes], grad)?))
}

/// Mean logistic loss for a single-logit binary classifier; label 1 wants a positive logit.
pub fn logistic_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.dims()[1] != 1 || logits.batch() != labels.len() {
        return Err(shape_err!("binary logits {} vs {} labels", logits.shape(), labels.len()));
    }
    let batch = labels.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(labels.len());
    for (&z, &label) in logits.data().iter().zip(labels) {
        let y = match label {
            0 => -1.0,
            1 => 1.0,
            _ => return Err(Error::InvalidLabel { label, classes: 2 }),
        };
        // softplus(-y z), stable in both tails
        let m = -y * z;
        total += m.max(0.0) + (-m.abs()).exp().ln_1p();
        let sig = 1.0 / (1.0 + (-m).exp());
        grad.push(-y * sig / batch);
    }
    Ok((total / batch, Tensor::new(vec![labels.len(), 1], grad)?))
}

/// Picks the loss matching the network head: logistic for one logit, softmax otherwise.
pub fn head_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() == 2 && logits.dims()[1] == 1 {
        logistic_loss(logits, labels)
    } else {
        cross_entropy(logits, labels)
    }
}
