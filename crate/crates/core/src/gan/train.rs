//! Alternating adversarial training with resumable checkpoints.
//!
//! A checkpoint directory holds:
//!
//! * `generator.sglb`: projection and body networks with their ADAM states,
//! * `discriminator.sglb`: projection, trunk and fusion networks with theirs,
//! * `trainer.state`: epoch counter, RNG position and metrics history,
//! * `metrics.csv`: the history as text.
//!
//! `trainer.state` layout (little endian):
//!
//! ```text
//! "SGTS" | version u16 | config digest u32 | epochs done u64
//! | rng seed [u8; 32] | rng stream u64 | rng word pos (lo u64, hi u64)
//! | generator crc u32 | discriminator crc u32
//! | rows u32 | rows × {epoch u64 | d f64 | g f64 | beta f64
//!                      | has_is u8 | is f64 | has_ms u8 | ms f64}
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{usize_to_u32, Reader, Writer};
use crate::io_util::write_atomic;
use crate::numcore::{
    decode_checkpoint, encode_checkpoint, AdamConfig, AdamState, CheckpointBlock, Tensor,
};
use crate::synthdata::Dataset;
use crate::triplets::{
    advance_curriculum, build_batch, BatchSpec, CaptionDraw, CurriculumState, SemanticIndex,
    Strategy,
};
use crate::{Error, Result};

use super::objective::{d_loss_on, g_loss_on, LossOptions, TripletTensors};
use super::{sample_noise, Discriminator, Generator, DEFAULT_NOISE_DIM};

pub const GENERATOR_FILE: &str = "generator.sglb";
pub const DISCRIMINATOR_FILE: &str = "discriminator.sglb";
pub const STATE_FILE: &str = "trainer.state";
pub const METRICS_FILE: &str = "metrics.csv";

const STATE_MAGIC: &[u8; 4] = b"SGTS";
const STATE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_captions: usize,
    pub caption_draw: CaptionDraw,
    pub strategy: Strategy,
    pub curriculum: CurriculumState,
    pub adam: AdamConfig,
    pub noise_dim: usize,
    pub loss: LossOptions,
    pub seed: u64,
    /// Save a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    /// Run the evaluator every this many epochs (0: only after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            batch_size: 64,
            n_captions: 4,
            caption_draw: CaptionDraw::PerUse,
            strategy: Strategy::EasyToHard,
            curriculum: CurriculumState::default(),
            adam: AdamConfig::default(),
            noise_dim: DEFAULT_NOISE_DIM,
            loss: LossOptions::default(),
            seed: 0,
            checkpoint_every: 10,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.n_captions == 0 {
            return Err(Error::Config("n_captions must be at least 1".into()));
        }
        if self.noise_dim == 0 {
            return Err(Error::Config("noise_dim must be at least 1".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(a.epsilon > 0.0) {
            return Err(Error::Config("adam epsilon must be positive".into()));
        }
        if !(self.loss.relevance_weight >= 0.0 && self.loss.relevance_weight.is_finite()) {
            return Err(Error::Config("relevance_weight must be finite and >= 0".into()));
        }
        self.curriculum.validate()
    }

    /// Fingerprint of every field that shapes the optimization trajectory.
    /// `epochs` and the checkpoint/eval cadence are excluded so a run can be
    /// resumed under a longer budget.
    fn digest(&self) -> u32 {
        let mut w = Writer::new();
        w.u64(self.batch_size as u64);
        w.u64(self.n_captions as u64);
        match self.caption_draw {
            CaptionDraw::PerUse => w.u8(0),
            CaptionDraw::PerExample { seed } => {
                w.u8(1);
                w.u64(seed);
            }
        }
        w.bytes(self.strategy.name().as_bytes());
        let c = &self.curriculum;
        w.u64(c.m_outer as u64);
        w.f64s(&[c.beta_start, c.beta_step, c.beta_max]);
        w.u64(c.beta_period as u64);
        let a = &self.adam;
        w.f64s(&[a.learning_rate, a.beta1, a.beta2, a.epsilon]);
        w.u64(self.noise_dim as u64);
        w.f64(self.loss.relevance_weight);
        w.u8(self.loss.fake_relevance_in_d as u8);
        w.u64(self.seed);
        crc32fast::hash(&w.into_inner())
    }
}

/// Both networks and their optimizer states.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub generator_adam: [AdamState; 2],
    pub discriminator_adam: [AdamState; 3],
}

impl TrainedModel {
    /// Fresh networks drawn from `seed` with zeroed optimizer states.
    pub fn initialize(text_dim: usize, config: &TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = Generator::random(text_dim, config.noise_dim, &mut rng)?;
        let discriminator = Discriminator::random(text_dim, &mut rng)?;
        let g = generator.networks().map(|n| AdamState::for_network(n, config.adam));
        let d = discriminator.networks().map(|n| AdamState::for_network(n, config.adam));
        Ok(Self {
            generator,
            discriminator,
            generator_adam: g,
            discriminator_adam: d,
        })
    }

    pub fn encode_generator(&self) -> Result<Vec<u8>> {
        let blocks: Vec<CheckpointBlock> = self
            .generator
            .networks()
            .into_iter()
            .zip(&self.generator_adam)
            .map(|(n, a)| CheckpointBlock {
                network: n.clone(),
                adam: Some(a.clone()),
            })
            .collect();
        encode_checkpoint(&blocks)
    }

    pub fn encode_discriminator(&self) -> Result<Vec<u8>> {
        let blocks: Vec<CheckpointBlock> = self
            .discriminator
            .networks()
            .into_iter()
            .zip(&self.discriminator_adam)
            .map(|(n, a)| CheckpointBlock {
                network: n.clone(),
                adam: Some(a.clone()),
            })
            .collect();
        encode_checkpoint(&blocks)
    }

    pub fn decode(generator: &[u8], discriminator: &[u8]) -> Result<Self> {
        let (g_nets, g_adam) = split_blocks::<2>(decode_checkpoint(generator)?, "generator")?;
        let (d_nets, d_adam) = split_blocks::<3>(decode_checkpoint(discriminator)?, "discriminator")?;
        let [gp, gb] = g_nets;
        let [dp, dt, df] = d_nets;
        Ok(Self {
            generator: Generator::from_networks(gp, gb)?,
            discriminator: Discriminator::from_networks(dp, dt, df)?,
            generator_adam: g_adam,
            discriminator_adam: d_adam,
        })
    }

    /// One discriminator step then one generator step on a batch.
    fn step(
        &mut self,
        batch: &TripletTensors,
        noise: &Tensor,
        opts: &LossOptions,
    ) -> Result<(f64, f64)> {
        let fakes = self.generator.forward(&batch.texts, noise)?;
        let d = d_loss_on(&mut self.discriminator, batch, &fakes, opts)?;
        for (net, adam) in self
            .discriminator
            .networks_mut()
            .into_iter()
            .zip(&mut self.discriminator_adam)
        {
            adam.step(net)?;
        }
        // the generator's forward cache still matches: its parameters have
        // not moved since `fakes` was computed
        let (g, image_grad) = g_loss_on(&mut self.discriminator, &batch.texts, &fakes, opts)?;
        self.generator.backward(&image_grad)?;
        for (net, adam) in self
            .generator
            .networks_mut()
            .into_iter()
            .zip(&mut self.generator_adam)
        {
            adam.step(net)?;
        }
        Ok((d, g))
    }
}

fn split_blocks<const N: usize>(
    blocks: Vec<CheckpointBlock>,
    what: &str,
) -> Result<([crate::numcore::Network; N], [AdamState; N])> {
    if blocks.len() != N {
        return Err(Error::Format(format!(
            "{what} checkpoint has {} blocks, expected {N}",
            blocks.len()
        )));
    }
    let mut nets = Vec::with_capacity(N);
    let mut states = Vec::with_capacity(N);
    for (i, b) in blocks.into_iter().enumerate() {
        let adam = b
            .adam
            .ok_or_else(|| Error::Format(format!("{what} block {i} has no optimizer state")))?;
        nets.push(b.network);
        states.push(adam);
    }
    let nets = nets.try_into().map_err(|_| Error::Format("block count".into()))?;
    let states = states.try_into().map_err(|_| Error::Format("block count".into()))?;
    Ok((nets, states))
}

/// Scores produced by an evaluator for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub oracle_is: f64,
    pub ms_ssim_mean: f64,
}

/// Periodic evaluation hook. Implementations must not draw from the training
/// RNG, so evaluated and unevaluated runs follow identical trajectories.
pub trait EpochEvaluator {
    fn evaluate(&mut self, epoch: usize, generator: &Generator) -> Result<EpochMetrics>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub d_loss: f64,
    pub g_loss: f64,
    pub beta: f64,
    pub oracle_is: Option<f64>,
    pub ms_ssim_mean: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "epoch,d_loss,g_loss,beta,oracle_is,ms_ssim_mean";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch,
                r.d_loss,
                r.g_loss,
                r.beta,
                opt(r.oracle_is),
                opt(r.ms_ssim_mean)
            );
        }
        s
    }

    /// The last row that carries an inception score.
    pub fn last_evaluated(&self) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| r.oracle_is.is_some())
    }
}

/// Stateful trainer over one dataset. Drive it epoch by epoch with
/// [`Trainer::run_epoch`] or to completion with [`Trainer::run`].
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    index: SemanticIndex,
    config: TrainConfig,
    model: TrainedModel,
    rng: ChaCha8Rng,
    epochs_done: usize,
    log: MetricsLog,
}

fn training_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn text_dim(dataset: &Dataset) -> Result<usize> {
    dataset
        .examples
        .first()
        .map(|e| e.captions[0].dim())
        .ok_or_else(|| Error::Argument("cannot train on an empty dataset".into()))
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = TrainedModel::initialize(text_dim(dataset)?, &config)?;
        Ok(Self {
            dataset,
            index: SemanticIndex::new(dataset),
            rng: training_rng(config.seed),
            config,
            model,
            epochs_done: 0,
            log: MetricsLog::default(),
        })
    }

    /// Restores a trainer from a checkpoint directory written by
    /// [`Trainer::save`] under a config that differs at most in `epochs`,
    /// `checkpoint_every` and `eval_every`.
    pub fn resume(dataset: &'a Dataset, config: TrainConfig, dir: &Path) -> Result<Self> {
        config.validate()?;
        text_dim(dataset)?;
        let g_bytes = fs::read(dir.join(GENERATOR_FILE))?;
        let d_bytes = fs::read(dir.join(DISCRIMINATOR_FILE))?;
        let state = fs::read(dir.join(STATE_FILE))?;
        let mut r = Reader::new(&state);
        r.expect_magic(STATE_MAGIC)?;
        r.expect_version(STATE_VERSION)?;
        let digest = r.u32()?;
        if digest != config.digest() {
            return Err(Error::Config(
                "checkpoint was written under a different training config".into(),
            ));
        }
        let epochs_done = r.u64()? as usize;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let lo = r.u64()? as u128;
        let hi = r.u64()? as u128;
        for (name, bytes) in [(GENERATOR_FILE, &g_bytes), (DISCRIMINATOR_FILE, &d_bytes)] {
            let stored = r.u32()?;
            let computed = crc32fast::hash(bytes);
            if stored != computed {
                return Err(Error::Format(format!(
                    "{name} does not belong to this trainer state (crc {computed:#010x}, expected {stored:#010x})"
                )));
            }
        }
        let count = r.u32()? as usize;
        let mut rows = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let epoch = r.u64()? as usize;
            let d_loss = r.f64()?;
            let g_loss = r.f64()?;
            let beta = r.f64()?;
            let has_is = r.u8()?;
            let is = r.f64()?;
            let has_ms = r.u8()?;
            let ms = r.f64()?;
            rows.push(MetricsRow {
                epoch,
                d_loss,
                g_loss,
                beta,
                oracle_is: (has_is != 0).then_some(is),
                ms_ssim_mean: (has_ms != 0).then_some(ms),
            });
        }
        r.finish()?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(lo | (hi << 64));
        let model = TrainedModel::decode(&g_bytes, &d_bytes)?;
        if model.generator.text_dim() != text_dim(dataset)?
            || model.generator.noise_dim() != config.noise_dim
        {
            return Err(Error::Dimension(
                "checkpoint network widths do not match the dataset and config".into(),
            ));
        }
        Ok(Self {
            dataset,
            index: SemanticIndex::new(dataset),
            config,
            model,
            rng,
            epochs_done,
            log: MetricsLog { rows },
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut TrainedModel {
        &mut self.model
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.config.epochs
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dataset.len().div_ceil(self.config.batch_size)
    }

    fn due(every: usize, epoch: usize, last: usize) -> bool {
        epoch + 1 == last || (every > 0 && (epoch + 1) % every == 0)
    }

    /// Trains one epoch. Fails with a numeric error if any loss or gradient
    /// becomes non-finite; the trainer must then be discarded.
    pub fn run_epoch(&mut self, evaluator: Option<&mut dyn EpochEvaluator>) -> Result<MetricsRow> {
        let epoch = self.epochs_done;
        let state = advance_curriculum(&self.config.curriculum, epoch);
        let spec = BatchSpec {
            strategy: self.config.strategy,
            batch_size: self.config.batch_size,
            n_captions: self.config.n_captions,
            caption_draw: self.config.caption_draw,
        };
        let batches = self.batches_per_epoch();
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for b in 0..batches {
            let triplets = build_batch(self.dataset, &self.index, &spec, &state, &mut self.rng)?;
            let tensors = TripletTensors::from_triplets(&triplets)?;
            let noise = sample_noise(tensors.len(), self.config.noise_dim, &mut self.rng)?;
            let (d, g) = self
                .model
                .step(&tensors, &noise, &self.config.loss)
                .map_err(|e| match e {
                    Error::Numeric(m) => {
                        Error::Numeric(format!("training diverged at epoch {epoch}, batch {b}: {m}"))
                    }
                    other => other,
                })?;
            d_sum += d;
            g_sum += g;
        }
        let mut row = MetricsRow {
            epoch,
            d_loss: d_sum / batches as f64,
            g_loss: g_sum / batches as f64,
            beta: state.beta,
            oracle_is: None,
            ms_ssim_mean: None,
        };
        if let Some(ev) = evaluator {
            if Self::due(self.config.eval_every, epoch, self.config.epochs) {
                let m = ev.evaluate(epoch, &self.model.generator)?;
                row.oracle_is = Some(m.oracle_is);
                row.ms_ssim_mean = Some(m.ms_ssim_mean);
            }
        }
        self.epochs_done += 1;
        self.log.rows.push(row);
        Ok(row)
    }

    /// Runs the remaining epochs, checkpointing into `dir` when given.
    pub fn run(
        &mut self,
        mut evaluator: Option<&mut dyn EpochEvaluator>,
        dir: Option<&Path>,
    ) -> Result<()> {
        let stop = self.config.epochs;
        match evaluator.as_mut() {
            Some(e) => self.run_until(stop, Some(&mut **e), dir),
            None => self.run_until(stop, None, dir),
        }
    }

    /// Like [`Trainer::run`] but stops once `stop` epochs are done.
    pub fn run_until(
        &mut self,
        stop: usize,
        mut evaluator: Option<&mut dyn EpochEvaluator>,
        dir: Option<&Path>,
    ) -> Result<()> {
        let stop = stop.min(self.config.epochs);
        while self.epochs_done < stop {
            let epoch = self.epochs_done;
            match evaluator.as_mut() {
                Some(e) => self.run_epoch(Some(&mut **e))?,
                None => self.run_epoch(None)?,
            };
            if let Some(dir) = dir {
                if Self::due(self.config.checkpoint_every, epoch, self.config.epochs)
                    || self.epochs_done == stop
                {
                    self.save(dir)?;
                }
            }
        }
        if let (Some(dir), 0) = (dir, self.config.epochs) {
            self.save(dir)?;
        }
        Ok(())
    }

    /// Writes the full checkpoint set into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let g = self.model.encode_generator()?;
        let d = self.model.encode_discriminator()?;
        let mut w = Writer::new();
        w.bytes(STATE_MAGIC);
        w.u16(STATE_VERSION);
        w.u32(self.config.digest());
        w.u64(self.epochs_done as u64);
        w.bytes(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        let pos = self.rng.get_word_pos();
        w.u64(pos as u64);
        w.u64((pos >> 64) as u64);
        w.u32(crc32fast::hash(&g));
        w.u32(crc32fast::hash(&d));
        w.u32(usize_to_u32(self.log.rows.len(), "metrics rows")?);
        for r in &self.log.rows {
            w.u64(r.epoch as u64);
            w.f64s(&[r.d_loss, r.g_loss, r.beta]);
            w.u8(r.oracle_is.is_some() as u8);
            w.f64(r.oracle_is.unwrap_or(0.0));
            w.u8(r.ms_ssim_mean.is_some() as u8);
            w.f64(r.ms_ssim_mean.unwrap_or(0.0));
        }
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(GENERATOR_FILE), &g)?;
        write_atomic(&dir.join(DISCRIMINATOR_FILE), &d)?;
        write_atomic(&dir.join(METRICS_FILE), self.log.to_csv().as_bytes())?;
        // written last: it vouches for the two network files
        write_atomic(&dir.join(STATE_FILE), &w.into_inner())
    }

    pub fn into_parts(self) -> (TrainedModel, MetricsLog) {
        (self.model, self.log)
    }
}

/// Trains from scratch without evaluation or checkpoints.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(TrainedModel, MetricsLog)> {
    let mut trainer = Trainer::new(dataset, config.clone())?;
    trainer.run(None, None)?;
    Ok(trainer.into_parts())
}

/// Loads just the generator from a checkpoint directory.
pub fn load_generator(dir: &Path) -> Result<Generator> {
    let (nets, _) = split_blocks::<2>(
        decode_checkpoint(&fs::read(dir.join(GENERATOR_FILE))?)?,
        "generator",
    )?;
    let [p, b] = nets;
    Generator::from_networks(p, b)
}
