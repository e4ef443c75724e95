use super::ops::logsumexp;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean squared error over all elements, and its gradient.
pub fn mse(pred: &Tensor, target: &[f64]) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "mse: {} predictions, {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len().max(1) as f64;
    let mut g = pred.clone();
    let mut loss = 0.0;
    for (gi, t) in g.data_mut().iter_mut().zip(target) {
        let d = *gi - t;
        loss += d * d;
        *gi = 2.0 * d / n;
    }
    Ok((loss / n, g))
}

/// Mean softmax cross-entropy of `[N, C]` logits against class labels.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::Shape(format!(
            "cross entropy: logits {s:?}, {} labels",
            labels.len()
        )));
    }
    let (n, c) = (s[0], s[1]);
    let mut g = logits.clone();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Input(format!(
                "label {y} out of range for {c} classes"
            )));
        }
        let row = &mut g.data_mut()[i * c..(i + 1) * c];
        let lse = logsumexp(row);
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / n as f64;
        }
        row[y] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, g))
}
