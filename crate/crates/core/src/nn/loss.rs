use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `p`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            p.len(),
            y.len()
        )));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let grad = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            (-y / q + (1.0 - y) / (1.0 - q)) / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Mean softmax cross-entropy over `(N, K)` logits, via log-sum-exp.
/// The gradient is `(softmax − onehot) / N`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{n} logit rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        row.iter_mut().for_each(|v| *v = (*v - lse).exp() / n as f64);
        row[label] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}
