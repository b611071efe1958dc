use crate::numcore::Tensor;
use crate::{Error, Result};

use super::OracleClassifier;

#[derive(Debug, Clone, PartialEq)]
pub struct ISReport {
    /// Mean of the per-split scores.
    pub score: f64,
    /// Population standard deviation of the per-split scores.
    pub std: f64,
    pub split_scores: Vec<f64>,
    pub splits: usize,
    pub samples: usize,
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

fn split_score(probs: &[Vec<f64>]) -> f64 {
    let k = probs[0].len();
    let mut marginal = vec![0.0; k];
    for p in probs {
        for (m, v) in marginal.iter_mut().zip(p) {
            *m += v;
        }
    }
    let n = probs.len() as f64;
    marginal.iter_mut().for_each(|m| *m /= n);
    let mean_kl = probs.iter().map(|p| kl(p, &marginal)).sum::<f64>() / n;
    mean_kl.exp()
}

/// `exp(E_x KL(p(y|x) || p(y)))` over consecutive splits of `probs`.
pub fn inception_score_from_probs(probs: &[Vec<f64>], splits: usize) -> Result<ISReport> {
    if probs.is_empty() {
        return Err(Error::Argument("inception score needs at least one sample".into()));
    }
    if splits == 0 || splits > probs.len() {
        return Err(Error::Argument(format!(
            "cannot cut {} samples into {splits} splits",
            probs.len()
        )));
    }
    let k = probs[0].len();
    if k == 0 || probs.iter().any(|p| p.len() != k) {
        return Err(Error::Dimension("probability rows differ in length".into()));
    }
    let n = probs.len();
    let split_scores: Vec<f64> = (0..splits)
        .map(|s| split_score(&probs[s * n / splits..(s + 1) * n / splits]))
        .collect();
    let score = split_scores.iter().sum::<f64>() / splits as f64;
    let var = split_scores.iter().map(|v| (v - score).powi(2)).sum::<f64>() / splits as f64;
    Ok(ISReport {
        score,
        std: var.sqrt(),
        split_scores,
        splits,
        samples: n,
    })
}

/// Inception-style score of `images` (`[n, 768]`) under the oracle.
pub fn inception_score(
    oracle: &OracleClassifier,
    images: &Tensor,
    splits: usize,
) -> Result<ISReport> {
    inception_score_from_probs(&oracle.predict(images)?, splits)
}
