//! Evaluation: an inception-style score under a trained oracle classifier,
//! single- and multi-scale structural similarity, and per-class diversity
//! reports with CSV and SVG output.

mod diversity;
mod evaluator;
mod inception;
mod oracle;
mod ssim;

pub use diversity::{
    class_diversity_report, dataset_diversity, diversity_csv, generate_samples, inception_csv,
    scatter_svg, ClassDiversity, MSSSIMReport, DEFAULT_PAIRS_PER_CLASS,
};
pub use evaluator::{evaluate_generator, EvalConfig, Evaluation, OracleEvaluator};
pub use inception::{inception_score, inception_score_from_probs, ISReport};
pub use oracle::{train_oracle, OracleClassifier, OracleConfig};
pub use ssim::{
    downsample, ms_ssim, ssim_single_scale, to_unit_range, MsSsimConfig, SsimWindow,
    DYNAMIC_RANGE, K1, K2, MS_SSIM_WEIGHTS,
};

#[cfg(test)]
mod tests;
