//! The text-conditioned adversarial model: a generator that maps noise and a
//! projected caption to an image, and a discriminator with a source head
//! (real or generated) and a relevance head (image matches text or not).

mod model;
mod objective;
mod train;

pub use model::{
    sample_noise, Discriminator, DiscriminatorOutput, Generator, DEFAULT_NOISE_DIM,
    TEXT_PROJECTION,
};
pub use objective::{
    d_loss, d_loss_on, g_loss, g_loss_on, BatchTargets, LossOptions, PairKind, TripletTensors,
};
pub use train::{
    load_generator, train, EpochEvaluator, EpochMetrics, MetricsLog, MetricsRow, TrainConfig,
    TrainedModel, Trainer, DISCRIMINATOR_FILE, GENERATOR_FILE, METRICS_FILE, STATE_FILE,
};
