use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rand::Rng;

use crate::synthdata::Dataset;
use crate::{Error, Result};

/// Exact text-space index over a dataset: one representative vector (the
/// mean caption) per example, plus per-class outer id lists.
#[derive(Debug)]
pub struct SemanticIndex {
    dim: usize,
    reps: Vec<f64>,
    norms: Vec<f64>,
    labels: Vec<usize>,
    // for each class, the ids of every example outside it, ascending
    outer: Vec<Vec<usize>>,
    evaluations: AtomicU64,
}

impl Clone for SemanticIndex {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            reps: self.reps.clone(),
            norms: self.norms.clone(),
            labels: self.labels.clone(),
            outer: self.outer.clone(),
            evaluations: AtomicU64::new(self.evaluations()),
        }
    }
}

impl SemanticIndex {
    pub fn new(dataset: &Dataset) -> Self {
        let reps: Vec<Vec<f64>> = dataset.examples.iter().map(|e| e.mean_caption()).collect();
        let labels = dataset.labels();
        Self::from_parts(reps, labels)
    }

    /// Builds an index from explicit representatives; used for hand-made
    /// geometries in tests and experiments.
    pub fn from_parts(reps: Vec<Vec<f64>>, labels: Vec<usize>) -> Self {
        assert_eq!(reps.len(), labels.len(), "one label per representative");
        let dim = reps.first().map_or(0, Vec::len);
        assert!(reps.iter().all(|r| r.len() == dim), "uniform dimension");
        let classes = labels.iter().map(|l| l + 1).max().unwrap_or(0);
        let outer = (0..classes)
            .map(|k| (0..labels.len()).filter(|&j| labels[j] != k).collect())
            .collect();
        let norms = reps
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Self {
            dim,
            reps: reps.into_iter().flatten().collect(),
            norms,
            labels,
            outer,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn representative(&self, i: usize) -> &[f64] {
        &self.reps[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of representative-pair evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(AtomicOrdering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, AtomicOrdering::Relaxed);
    }

    fn count(&self, n: usize) {
        self.evaluations.fetch_add(n as u64, AtomicOrdering::Relaxed);
    }

    /// Every example whose label differs from example `i`'s.
    pub fn outer_ids(&self, i: usize) -> Result<&[usize]> {
        if i >= self.len() {
            return Err(Error::Argument(format!(
                "example {i} outside index of {}",
                self.len()
            )));
        }
        let outer = &self.outer[self.labels[i]];
        if outer.is_empty() {
            return Err(Error::Strategy(format!(
                "example {i} has no examples outside its class"
            )));
        }
        Ok(outer)
    }

    /// `min(m, outer count)` distinct outer ids drawn uniformly without replacement.
    pub fn draw_outer_subset<R: Rng + ?Sized>(
        &self,
        i: usize,
        m: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::Argument("outer sample count M must be at least 1".into()));
        }
        let outer = self.outer_ids(i)?;
        if m >= outer.len() {
            return Ok(outer.to_vec());
        }
        Ok(rand::seq::index::sample(rng, outer.len(), m)
            .into_iter()
            .map(|p| outer[p])
            .collect())
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.representative(i)
            .iter()
            .zip(self.representative(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn cosine_similarity(&self, i: usize, j: usize) -> Result<f64> {
        let (ni, nj) = (self.norms[i], self.norms[j]);
        if ni == 0.0 || nj == 0.0 {
            let which = if ni == 0.0 { i } else { j };
            return Err(Error::Numeric(format!(
                "example {which} has a zero-norm embedding; cosine similarity is undefined"
            )));
        }
        let dot: f64 = self
            .representative(i)
            .iter()
            .zip(self.representative(j))
            .map(|(a, b)| a * b)
            .sum();
        Ok(dot / (ni * nj))
    }

    fn extreme<I>(&self, i: usize, candidates: I, want: Ordering) -> usize
    where
        I: IntoIterator<Item = usize>,
    {
        let mut best: Option<(f64, usize)> = None;
        let mut n = 0;
        for j in candidates {
            n += 1;
            let d = self.squared_distance(i, j);
            let better = match best {
                None => true,
                Some((bd, bj)) => match d.total_cmp(&bd) {
                    Ordering::Equal => j < bj,
                    o => o == want,
                },
            };
            if better {
                best = Some((d, j));
            }
        }
        self.count(n);
        best.expect("candidate set is nonempty").1
    }

    /// Candidate with the largest squared distance to `i`.
    pub fn farthest<I: IntoIterator<Item = usize>>(&self, i: usize, candidates: I) -> usize {
        self.extreme(i, candidates, Ordering::Greater)
    }

    /// Candidate with the smallest squared distance to `i`.
    pub fn closest<I: IntoIterator<Item = usize>>(&self, i: usize, candidates: I) -> usize {
        self.extreme(i, candidates, Ordering::Less)
    }

    /// Candidate at rank `ceil(beta * m) - 1` once the candidates are sorted by
    /// ascending cosine similarity to `i` (ties by id).
    pub fn percentile_by_cosine(&self, i: usize, candidates: Vec<usize>, beta: f64) -> Result<usize> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Argument(format!("beta {beta} outside (0, 1]")));
        }
        let mut scored = candidates
            .into_iter()
            .map(|j| Ok((self.cosine_similarity(i, j)?, j)))
            .collect::<Result<Vec<_>>>()?;
        if scored.is_empty() {
            return Err(Error::Strategy("no candidates to rank".into()));
        }
        self.count(scored.len());
        let rank = super::percentile_rank(beta, scored.len());
        let (_, (_, j), _) = scored
            .select_nth_unstable_by(rank, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(*j)
    }
}
