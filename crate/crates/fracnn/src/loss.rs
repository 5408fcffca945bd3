//! Loss functions and the first-order gradient at the network output that
//! seeds the backward sweep.
//!
//! Cross-entropy fuses the softmax with the loss: the network head stays
//! linear, `loss_value` applies a numerically stable softmax per column,
//! and `loss_gradient` returns `(softmax(logits) - labels) / m` directly.
//! Batch reduction is the mean over columns, applied here so layer code
//! never rescales.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax over each output column followed by mean negative
    /// log-likelihood against one-hot labels.
    CrossEntropySoftmax,
    /// Mean over the batch of the squared error summed over classes.
    Quadratic,
}

/// Column-wise numerically stable softmax of a `[k x m]` tensor.
pub fn softmax_columns(logits: &Tensor) -> Result<Tensor> {
    let (k, m) = logits.dims2("softmax_columns")?;
    let mut out = vec![0.0; k * m];
    let data = logits.data();
    for col in 0..m {
        let mut max = f64::NEG_INFINITY;
        for row in 0..k {
            max = max.max(data[row * m + col]);
        }
        let mut sum = 0.0;
        for row in 0..k {
            let e = (data[row * m + col] - max).exp();
            out[row * m + col] = e;
            sum += e;
        }
        for row in 0..k {
            out[row * m + col] /= sum;
        }
    }
    Tensor::new(vec![k, m], out)
}

fn validate(kind: LossKind, outputs: &Tensor, labels: &Tensor) -> Result<(usize, usize)> {
    let (k, m) = outputs.dims2("loss")?;
    if labels.shape() != outputs.shape() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            left: outputs.shape().to_vec(),
            right: labels.shape().to_vec(),
        });
    }
    if outputs.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("loss input"));
    }
    // The log-likelihood needs unit basis label columns; the quadratic
    // loss accepts arbitrary regression targets.
    if kind == LossKind::CrossEntropySoftmax {
        let ld = labels.data();
        for col in 0..m {
            let mut ones = 0;
            for row in 0..k {
                let v = ld[row * m + col];
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return Err(Error::LabelsNotOneHot(format!(
                        "column {col} contains value {v}"
                    )));
                }
            }
            if ones != 1 {
                return Err(Error::LabelsNotOneHot(format!(
                    "column {col} has {ones} entries equal to one"
                )));
            }
        }
    }
    Ok((k, m))
}

/// Scalar loss for a batch of outputs (logits for cross-entropy, raw
/// outputs for the quadratic loss) against one-hot label columns.
pub fn loss_value(kind: LossKind, outputs: &Tensor, labels: &Tensor) -> Result<f64> {
    let (k, m) = validate(kind, outputs, labels)?;
    match kind {
        LossKind::CrossEntropySoftmax => {
            let probs = softmax_columns(outputs)?;
            let pd = probs.data();
            let ld = labels.data();
            let mut total = 0.0;
            for col in 0..m {
                for row in 0..k {
                    if ld[row * m + col] == 1.0 {
                        let p = pd[row * m + col].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                        total -= p.ln();
                    }
                }
            }
            Ok(total / m as f64)
        }
        LossKind::Quadratic => {
            let od = outputs.data();
            let ld = labels.data();
            let mut total = 0.0;
            for i in 0..od.len() {
                let d = od[i] - ld[i];
                total += d * d;
            }
            Ok(total / m as f64)
        }
    }
}

/// First-order gradient of [`loss_value`] with respect to the outputs.
pub fn loss_gradient(kind: LossKind, outputs: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let (_, m) = validate(kind, outputs, labels)?;
    let inv_m = 1.0 / m as f64;
    match kind {
        LossKind::CrossEntropySoftmax => {
            let probs = softmax_columns(outputs)?;
            Ok(probs.sub(labels)?.scale(inv_m))
        }
        LossKind::Quadratic => Ok(outputs.sub(labels)?.scale(2.0 * inv_m)),
    }
}
