use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / N` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let n = logits.n();
    let classes = logits.sample_len();
    if labels.len() != n {
        return Err(Error::invalid(format!(
            "softmax_cross_entropy: {} labels for {} logits rows",
            labels.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::invalid("softmax_cross_entropy: empty batch"));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0f64;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::invalid(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.sample(i);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() - (row[label] - max) as f64;
        let g = grad.sample_mut(i);
        for (k, e) in exps.iter().enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            g[k] = ((e / z - onehot) / n as f64) as f32;
        }
    }
    Ok(((total / n as f64) as f32, grad))
}

/// Mean squared error and its gradient `2 (pred - target) / len`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::invalid(format!(
            "mse: shape {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let len = pred.len().max(1) as f64;
    let mut total = 0.0f64;
    let grad: Vec<f32> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t) as f64;
            total += d * d;
            (2.0 * d / len) as f32
        })
        .collect();
    Ok(((total / len) as f32, Tensor::new(pred.shape(), grad)?))
}
