//! Softmax output, the two-term cross-entropy and the L1 penalty.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clamp applied inside the cross-entropy logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Row-wise softmax of a `[batch, classes]` logit matrix.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let n = logits.row_len();
    if n == 0 {
        return out;
    }
    for row in out.data_mut().chunks_exact_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Pulls a gradient with respect to softmax outputs back to the logits.
pub fn softmax_backward(probs: &Tensor, dprobs: &Tensor) -> Tensor {
    let n = probs.row_len();
    let mut out = dprobs.clone();
    if n == 0 {
        return out;
    }
    for (p, d) in probs.data().chunks_exact(n).zip(out.data_mut().chunks_exact_mut(n)) {
        let dot: f64 = p.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
        for (dv, &pv) in d.iter_mut().zip(p) {
            *dv = pv * (*dv - dot);
        }
    }
    out
}

/// Batch-mean of `-Σ c·ln p + (1-c)·ln(1-p)` with `p` clamped to `[ε, 1-ε]`,
/// and its gradient with respect to `probs`.
pub fn loss_and_grad(probs: &Tensor, labels_onehot: &Tensor) -> Result<(f64, Tensor)> {
    if probs.shape() != labels_onehot.shape() || probs.rank() != 2 {
        return Err(Error::Dimension {
            op: "cross_entropy",
            lhs: probs.shape().to_vec(),
            rhs: labels_onehot.shape().to_vec(),
        });
    }
    let n = probs.row_len();
    for (i, row) in labels_onehot.data().chunks(n.max(1)).enumerate() {
        let valid = row.iter().all(|&c| c == 0.0 || c == 1.0) && row.iter().sum::<f64>() == 1.0;
        if !valid {
            return Err(Error::Input(format!("label row {i} is not one-hot: {row:?}")));
        }
    }
    let batch = probs.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(probs.shape());
    for ((g, &p), &c) in grad
        .data_mut()
        .iter_mut()
        .zip(probs.data())
        .zip(labels_onehot.data())
    {
        let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= c * q.ln() + (1.0 - c) * (1.0 - q).ln();
        if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
            *g = (-c / q + (1.0 - c) / (1.0 - q)) / batch;
        }
    }
    Ok((loss / batch, grad))
}

/// `coef · Σ|w|` and its subgradient `coef · sign(w)` with `sign(0) = 0`.
pub fn l1_term(w: &Tensor, coef: f64) -> (f64, Tensor) {
    let penalty = coef * w.data().iter().map(|v| v.abs()).sum::<f64>();
    let subgrad = w.map(|v| if v == 0.0 { 0.0 } else { coef * v.signum() });
    (penalty, subgrad)
}
