//! Losses on network outputs. Each returns the loss and its gradient with
//! respect to the network output it was given.

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of a sigmoid output `p` against target `y ∈ {0, 1}`.
/// Returns `(loss, dloss/dp)`; the derivative is zero where `p` was clamped.
pub fn bce(p: f64, target: f64) -> (f64, f64) {
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;
    let q = p.clamp(lo, hi);
    let loss = -(target * q.ln() + (1.0 - target) * (1.0 - q).ln());
    let grad = if p < lo || p > hi {
        0.0
    } else {
        -target / q + (1.0 - target) / (1.0 - q)
    };
    (loss, grad)
}

/// Numerically stable softmax of one row of logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of a logit row against class `label`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    p[label] -= 1.0;
    (loss, p)
}
