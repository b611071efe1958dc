use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gan::{EpochEvaluator, EpochMetrics, Generator};
use crate::synthdata::Dataset;
use crate::Result;

use super::{
    class_diversity_report, generate_samples, inception_score, ISReport, MSSSIMReport,
    MsSsimConfig, OracleClassifier, DEFAULT_PAIRS_PER_CLASS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub samples: usize,
    pub splits: usize,
    pub pairs_per_class: usize,
    pub n_captions: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 3000,
            splits: 10,
            pairs_per_class: DEFAULT_PAIRS_PER_CLASS,
            n_captions: 4,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub inception: ISReport,
    pub generated: MSSSIMReport,
}

/// Scores `samples` generated images: the oracle inception score and the
/// per-class diversity of the same images.
pub fn evaluate_generator(
    gen: &Generator,
    oracle: &OracleClassifier,
    ds: &Dataset,
    config: &EvalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Evaluation> {
    let (images, labels) = generate_samples(gen, ds, config.samples, config.n_captions, rng)?;
    let inception = inception_score(oracle, &images, config.splits)?;
    let generated = class_diversity_report(
        &images,
        &labels,
        ds.class_count(),
        config.pairs_per_class,
        &MsSsimConfig::default(),
        rng,
    )?;
    Ok(Evaluation {
        inception,
        generated,
    })
}

/// Training hook that evaluates with its own RNG, reseeded per epoch.
pub struct OracleEvaluator<'a> {
    pub oracle: &'a OracleClassifier,
    pub dataset: &'a Dataset,
    pub config: EvalConfig,
}

impl OracleEvaluator<'_> {
    pub fn rng_for_epoch(&self, epoch: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

impl EpochEvaluator for OracleEvaluator<'_> {
    fn evaluate(&mut self, epoch: usize, generator: &Generator) -> Result<EpochMetrics> {
        let mut rng = self.rng_for_epoch(epoch);
        let e = evaluate_generator(generator, self.oracle, self.dataset, &self.config, &mut rng)?;
        Ok(EpochMetrics {
            oracle_is: e.inception.score,
            ms_ssim_mean: e.generated.mean().unwrap_or(f64::NAN),
        })
    }
}
