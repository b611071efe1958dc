//! Triplet formation and negative selection.
//!
//! A triplet pairs a positive image and its averaged caption with a negative
//! image from a different class. Negatives are chosen in the text space of
//! the examples' mean captions ([`SemanticIndex`]):
//!
//! | strategy       | candidates               | pick                                  |
//! |----------------|--------------------------|---------------------------------------|
//! | `random`       | all outer examples       | uniform                               |
//! | `easy`         | all outer examples       | largest squared distance              |
//! | `hard`         | all outer examples       | smallest squared distance             |
//! | `semi_easy`    | `M` random outer examples| largest squared distance              |
//! | `semi_hard`    | `M` random outer examples| smallest squared distance             |
//! | `easy_to_hard` | `M` random outer examples| cosine-similarity rank `ceil(β M)`    |
//!
//! Ties always go to the smallest example id.

mod curriculum;
mod index;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::numcore::Tensor;
use crate::synthdata::{average_captions, Dataset, TextEmbedding};
use crate::{Error, Result};

pub use curriculum::{advance_curriculum, CurriculumState};
pub use index::SemanticIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Easy,
    Hard,
    SemiEasy,
    SemiHard,
    EasyToHard,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Easy,
        Strategy::Hard,
        Strategy::SemiEasy,
        Strategy::SemiHard,
        Strategy::EasyToHard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Easy => "easy",
            Strategy::Hard => "hard",
            Strategy::SemiEasy => "semi_easy",
            Strategy::SemiHard => "semi_hard",
            Strategy::EasyToHard => "easy_to_hard",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s || st.name().replace('_', "-") == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?} (expected one of random, easy, hard, semi_easy, semi_hard, easy_to_hard)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub strategy: Strategy,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub positive_image: Tensor,
    pub positive_text: TextEmbedding,
    pub negative_image: Tensor,
    pub positive_label: usize,
    pub negative_label: usize,
    pub provenance: Provenance,
}

pub fn sample_random_negative<R: Rng + ?Sized>(
    index: &SemanticIndex,
    i: usize,
    rng: &mut R,
) -> Result<usize> {
    let outer = index.outer_ids(i)?;
    Ok(outer[rng.random_range(0..outer.len())])
}

pub fn sample_easy_negative(index: &SemanticIndex, i: usize) -> Result<usize> {
    let outer = index.outer_ids(i)?;
    Ok(index.farthest(i, outer.iter().copied()))
}

pub fn sample_hard_negative(index: &SemanticIndex, i: usize) -> Result<usize> {
    let outer = index.outer_ids(i)?;
    Ok(index.closest(i, outer.iter().copied()))
}

pub fn sample_semi_easy_negative<R: Rng + ?Sized>(
    index: &SemanticIndex,
    i: usize,
    m: usize,
    rng: &mut R,
) -> Result<usize> {
    let drawn = index.draw_outer_subset(i, m, rng)?;
    Ok(index.farthest(i, drawn))
}

pub fn sample_semi_hard_negative<R: Rng + ?Sized>(
    index: &SemanticIndex,
    i: usize,
    m: usize,
    rng: &mut R,
) -> Result<usize> {
    let drawn = index.draw_outer_subset(i, m, rng)?;
    Ok(index.closest(i, drawn))
}

pub fn sample_easy_to_hard_negative<R: Rng + ?Sized>(
    index: &SemanticIndex,
    i: usize,
    state: &CurriculumState,
    rng: &mut R,
) -> Result<usize> {
    state.validate()?;
    let drawn = index.draw_outer_subset(i, state.m_outer, rng)?;
    index.percentile_by_cosine(i, drawn, state.beta)
}

/// 0-based rank selected at weight `beta` among `m` ascending similarities.
pub fn percentile_rank(beta: f64, m: usize) -> usize {
    // the small offset absorbs representation error in products like 0.7 * 1000
    let r = (beta * m as f64 - 1e-9).ceil() as usize;
    r.clamp(1, m) - 1
}

/// Chooses a single negative for reference example `i`.
pub fn sample_negative<R: Rng + ?Sized>(
    index: &SemanticIndex,
    strategy: Strategy,
    i: usize,
    state: &CurriculumState,
    rng: &mut R,
) -> Result<usize> {
    match strategy {
        Strategy::Random => sample_random_negative(index, i, rng),
        Strategy::Easy => sample_easy_negative(index, i),
        Strategy::Hard => sample_hard_negative(index, i),
        Strategy::SemiEasy => sample_semi_easy_negative(index, i, state.m_outer, rng),
        Strategy::SemiHard => sample_semi_hard_negative(index, i, state.m_outer, rng),
        Strategy::EasyToHard => sample_easy_to_hard_negative(index, i, state, rng),
    }
}

/// How positive captions are averaged when building batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptionDraw {
    /// A fresh draw of `n` captions each time an example is used.
    PerUse,
    /// One fixed draw per example, derived from the example id and `seed`.
    PerExample { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSpec {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub n_captions: usize,
    pub caption_draw: CaptionDraw,
}

/// `batch_size` triplets: positives uniform with replacement, then each
/// positive's averaged caption and its negative.
pub fn build_batch<R: Rng + ?Sized>(
    dataset: &Dataset,
    index: &SemanticIndex,
    spec: &BatchSpec,
    state: &CurriculumState,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot build a batch from an empty dataset".into()));
    }
    if spec.batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    if index.len() != dataset.len() {
        return Err(Error::Dimension(format!(
            "index covers {} examples, dataset has {}",
            index.len(),
            dataset.len()
        )));
    }
    let mut batch = Vec::with_capacity(spec.batch_size);
    for _ in 0..spec.batch_size {
        let i = rng.random_range(0..dataset.len());
        let ex = &dataset.examples[i];
        let text = match spec.caption_draw {
            CaptionDraw::PerUse => average_captions(ex, spec.n_captions, rng)?,
            CaptionDraw::PerExample { seed } => {
                use rand::SeedableRng;
                let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(
                    seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                );
                average_captions(ex, spec.n_captions, &mut r)?
            }
        };
        let j = sample_negative(index, spec.strategy, i, state, rng)?;
        let neg = &dataset.examples[j];
        debug_assert_ne!(ex.label, neg.label);
        batch.push(Triplet {
            positive_image: ex.image.clone(),
            positive_text: text,
            negative_image: neg.image.clone(),
            positive_label: ex.label,
            negative_label: neg.label,
            provenance: Provenance {
                strategy: spec.strategy,
                positive: i,
                negative: j,
            },
        });
    }
    Ok(batch)
}
