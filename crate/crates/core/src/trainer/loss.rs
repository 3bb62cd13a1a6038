use crate::error::{Result, TwuError};
use crate::filterbank::{pr_loss, pr_loss_grad};

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn check_batch(logits: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(crate::error::shape(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.iter().flatten().any(|v| v.is_nan()) {
        return Err(TwuError::Diverged {
            epoch: None,
            reason: "NaN logits".into(),
        });
    }
    for (row, &l) in logits.iter().zip(labels) {
        if l >= row.len() {
            return Err(crate::error::invalid(format!("label {l} out of range")));
        }
    }
    Ok(())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_batch(logits, labels)?;
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(row, &l)| -log_softmax(row)[l])
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of the cross-entropy of one sample with respect to its logits.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Vec<f64> {
    log_softmax(logits)
        .into_iter()
        .enumerate()
        .map(|(k, lp)| lp.exp() - if k == label { 1.0 } else { 0.0 })
        .collect()
}

/// `CE + alpha * Σ pr_loss(h0)` over the listed free-tap banks.
pub fn total_loss(logits: &[Vec<f64>], labels: &[usize], h0_list: &[Vec<f64>], alpha: f64) -> Result<f64> {
    let ce = cross_entropy(logits, labels)?;
    if alpha == 0.0 {
        return Ok(ce);
    }
    let mut penalty = 0.0;
    for h0 in h0_list {
        penalty += pr_loss(h0)?;
    }
    Ok(ce + alpha * penalty)
}

/// Gradient of `alpha * pr_loss(h0)`.
pub fn penalty_grad(h0: &[f64], alpha: f64) -> Result<Vec<f64>> {
    Ok(pr_loss_grad(h0)?.into_iter().map(|g| alpha * g).collect())
}
