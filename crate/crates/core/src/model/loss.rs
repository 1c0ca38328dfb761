//! Output losses and their gradients with respect to the logits.

use super::tensor::{sigmoid, softplus};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// `−log softmax(logits)[gold]`.
pub fn xent_loss(logits: &[f64], gold: usize) -> f64 {
    -log_softmax(logits)[gold]
}

pub fn xent_grad(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    let loss = -(logits[gold] - max - sum.ln());
    p[gold] -= 1.0;
    (loss, p)
}

/// Sum of per-candidate binary cross-entropies against the valid set.
pub fn all_answers_loss(logits: &[f64], valid: &[u32]) -> f64 {
    all_answers_grad(logits, valid).0
}

pub fn all_answers_grad(logits: &[f64], valid: &[u32]) -> (f64, Vec<f64>) {
    let mut target = vec![0.0; logits.len()];
    for &v in valid {
        target[v as usize] = 1.0;
    }
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(&target)
        .map(|(&z, &y)| {
            // −y ln σ(z) − (1−y) ln(1−σ(z)), in softplus form
            loss += if y > 0.0 { softplus(-z) } else { softplus(z) };
            sigmoid(z) - y
        })
        .collect();
    (loss, grad)
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Negated REINFORCE surrogate `−(r·log π(a) + β·H(π))` and its gradient.
pub fn reinforce_grad(logits: &[f64], action: usize, reward: f64, beta: f64) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let logp = log_softmax(logits);
    let h = entropy(&p);
    let loss = -(reward * logp[action] + beta * h);
    let grad = p
        .iter()
        .zip(&logp)
        .enumerate()
        .map(|(j, (&pj, &lj))| {
            let onehot = if j == action { 1.0 } else { 0.0 };
            // dH/dz_j = −π_j (log π_j + H)
            -reward * (onehot - pj) + beta * pj * (lj + h)
        })
        .collect();
    (loss, grad)
}
