//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! schema_version = 1
//! strategy = easy_to_hard
//! epochs = 200
//! ```
//!
//! Every key is typed, `schema_version` is mandatory, and unknown or
//! repeated keys are errors. Keys that are absent keep their defaults.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::gan::TrainConfig;
use crate::metrics::{EvalConfig, OracleConfig};
use crate::synthdata::DatasetSpec;
use crate::triplets::{CaptionDraw, Strategy};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
    pub eval: EvalConfig,
    pub sweep_strategies: Vec<Strategy>,
    pub sweep_seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            train: TrainConfig {
                epochs: 200,
                seed: 1,
                ..TrainConfig::default()
            },
            oracle: OracleConfig::default(),
            eval: EvalConfig::default(),
            sweep_strategies: vec![
                Strategy::Random,
                Strategy::EasyToHard,
                Strategy::Hard,
                Strategy::SemiHard,
            ],
            sweep_seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("segan-out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn caption_draw_name(d: CaptionDraw) -> String {
    match d {
        CaptionDraw::PerUse => "per_use".into(),
        CaptionDraw::PerExample { seed } => format!("per_example:{seed}"),
    }
}

fn parse_caption_draw(key: &str, value: &str) -> Result<CaptionDraw> {
    if value == "per_use" {
        return Ok(CaptionDraw::PerUse);
    }
    match value.strip_prefix("per_example:") {
        Some(seed) => Ok(CaptionDraw::PerExample {
            seed: parse(key, seed)?,
        }),
        None => Err(Error::Config(format!(
            "{key}: expected per_use or per_example:<seed>, got {value:?}"
        ))),
    }
}

/// Every settable key, in emission order.
pub const KEYS: &[&str] = &[
    "classes",
    "per_class",
    "embed_dim",
    "overlap",
    "caption_noise",
    "render_noise",
    "data_seed",
    "strategy",
    "epochs",
    "batch_size",
    "n_captions",
    "caption_draw",
    "m_outer",
    "beta_start",
    "beta_step",
    "beta_period",
    "beta_max",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "noise_dim",
    "relevance_weight",
    "fake_relevance_in_d",
    "seed",
    "checkpoint_every",
    "eval_every",
    "oracle_hidden",
    "oracle_epochs",
    "oracle_batch_size",
    "oracle_learning_rate",
    "oracle_holdout",
    "oracle_min_accuracy",
    "oracle_seed",
    "is_samples",
    "is_splits",
    "pairs_per_class",
    "eval_captions",
    "eval_seed",
    "sweep_strategies",
    "sweep_seeds",
    "output_dir",
];

impl ExperimentConfig {
    pub fn get(&self, key: &str) -> Result<String> {
        let d = &self.dataset;
        let t = &self.train;
        let c = &t.curriculum;
        let a = &t.adam;
        let o = &self.oracle;
        let e = &self.eval;
        Ok(match key {
            "classes" => d.classes.to_string(),
            "per_class" => d.per_class.to_string(),
            "embed_dim" => d.embed_dim.to_string(),
            "overlap" => d.overlap.to_string(),
            "caption_noise" => d.caption_noise.to_string(),
            "render_noise" => d.render_noise.to_string(),
            "data_seed" => d.seed.to_string(),
            "strategy" => t.strategy.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "n_captions" => t.n_captions.to_string(),
            "caption_draw" => caption_draw_name(t.caption_draw),
            "m_outer" => c.m_outer.to_string(),
            "beta_start" => c.beta_start.to_string(),
            "beta_step" => c.beta_step.to_string(),
            "beta_period" => c.beta_period.to_string(),
            "beta_max" => c.beta_max.to_string(),
            "learning_rate" => a.learning_rate.to_string(),
            "adam_beta1" => a.beta1.to_string(),
            "adam_beta2" => a.beta2.to_string(),
            "adam_epsilon" => a.epsilon.to_string(),
            "noise_dim" => t.noise_dim.to_string(),
            "relevance_weight" => t.loss.relevance_weight.to_string(),
            "fake_relevance_in_d" => t.loss.fake_relevance_in_d.to_string(),
            "seed" => t.seed.to_string(),
            "checkpoint_every" => t.checkpoint_every.to_string(),
            "eval_every" => t.eval_every.to_string(),
            "oracle_hidden" => o.hidden.to_string(),
            "oracle_epochs" => o.epochs.to_string(),
            "oracle_batch_size" => o.batch_size.to_string(),
            "oracle_learning_rate" => o.learning_rate.to_string(),
            "oracle_holdout" => o.holdout.to_string(),
            "oracle_min_accuracy" => o.min_accuracy.to_string(),
            "oracle_seed" => o.seed.to_string(),
            "is_samples" => e.samples.to_string(),
            "is_splits" => e.splits.to_string(),
            "pairs_per_class" => e.pairs_per_class.to_string(),
            "eval_captions" => e.n_captions.to_string(),
            "eval_seed" => e.seed.to_string(),
            "sweep_strategies" => join(&self.sweep_strategies),
            "sweep_seeds" => join(&self.sweep_seeds),
            "output_dir" => self.output_dir.display().to_string(),
            _ => return Err(unknown(key)),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let d = &mut self.dataset;
        let t = &mut self.train;
        let o = &mut self.oracle;
        let e = &mut self.eval;
        match key {
            "classes" => d.classes = parse(key, v)?,
            "per_class" => d.per_class = parse(key, v)?,
            "embed_dim" => d.embed_dim = parse(key, v)?,
            "overlap" => d.overlap = parse(key, v)?,
            "caption_noise" => d.caption_noise = parse(key, v)?,
            "render_noise" => d.render_noise = parse(key, v)?,
            "data_seed" => d.seed = parse(key, v)?,
            "strategy" => t.strategy = v.parse()?,
            "epochs" => t.epochs = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "n_captions" => t.n_captions = parse(key, v)?,
            "caption_draw" => t.caption_draw = parse_caption_draw(key, v)?,
            "m_outer" => t.curriculum.m_outer = parse(key, v)?,
            "beta_start" => {
                t.curriculum.beta_start = parse(key, v)?;
                t.curriculum.beta = t.curriculum.beta_start;
            }
            "beta_step" => t.curriculum.beta_step = parse(key, v)?,
            "beta_period" => t.curriculum.beta_period = parse(key, v)?,
            "beta_max" => t.curriculum.beta_max = parse(key, v)?,
            "learning_rate" => t.adam.learning_rate = parse(key, v)?,
            "adam_beta1" => t.adam.beta1 = parse(key, v)?,
            "adam_beta2" => t.adam.beta2 = parse(key, v)?,
            "adam_epsilon" => t.adam.epsilon = parse(key, v)?,
            "noise_dim" => t.noise_dim = parse(key, v)?,
            "relevance_weight" => t.loss.relevance_weight = parse(key, v)?,
            "fake_relevance_in_d" => t.loss.fake_relevance_in_d = parse_bool(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, v)?,
            "eval_every" => t.eval_every = parse(key, v)?,
            "oracle_hidden" => o.hidden = parse(key, v)?,
            "oracle_epochs" => o.epochs = parse(key, v)?,
            "oracle_batch_size" => o.batch_size = parse(key, v)?,
            "oracle_learning_rate" => o.learning_rate = parse(key, v)?,
            "oracle_holdout" => o.holdout = parse(key, v)?,
            "oracle_min_accuracy" => o.min_accuracy = parse(key, v)?,
            "oracle_seed" => o.seed = parse(key, v)?,
            "is_samples" => e.samples = parse(key, v)?,
            "is_splits" => e.splits = parse(key, v)?,
            "pairs_per_class" => e.pairs_per_class = parse(key, v)?,
            "eval_captions" => e.n_captions = parse(key, v)?,
            "eval_seed" => e.seed = parse(key, v)?,
            "sweep_strategies" => {
                self.sweep_strategies = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "sweep_seeds" => self.sweep_seeds = parse_list(key, v)?,
            "output_dir" => {
                if v.is_empty() || v.contains('\n') {
                    return Err(Error::Config("output_dir must be a nonempty single line".into()));
                }
                self.output_dir = PathBuf::from(v);
            }
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    /// Checks every section.
    pub fn validate(&self) -> Result<()> {
        self.dataset
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        let o = &self.oracle;
        if o.hidden == 0 || o.batch_size == 0 {
            return Err(Error::Config("oracle_hidden and oracle_batch_size must be positive".into()));
        }
        if !(o.holdout > 0.0 && o.holdout < 1.0) {
            return Err(Error::Config("oracle_holdout must lie in (0, 1)".into()));
        }
        let e = &self.eval;
        if e.samples == 0 || e.splits == 0 || e.splits > e.samples {
            return Err(Error::Config(format!(
                "cannot split {} inception samples into {} splits",
                e.samples, e.splits
            )));
        }
        if e.pairs_per_class == 0 {
            return Err(Error::Config("pairs_per_class must be at least 1".into()));
        }
        for (name, n) in [("n_captions", self.train.n_captions), ("eval_captions", e.n_captions)] {
            if n > crate::synthdata::CAPTIONS_PER_EXAMPLE {
                return Err(Error::Config(format!(
                    "{name} = {n} exceeds the {} captions per example",
                    crate::synthdata::CAPTIONS_PER_EXAMPLE
                )));
            }
        }
        Ok(())
    }

    /// Canonical text form; [`ExperimentConfig::parse`] inverts it exactly.
    pub fn emit(&self) -> String {
        let mut s = format!("# segan experiment\nschema_version = {SCHEMA_VERSION}\n");
        for key in KEYS {
            let v = self.get(key).expect("every listed key is readable");
            s.push_str(&format!("{key} = {v}\n"));
        }
        s
    }

    /// Defaults overridden by the keys present in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut version = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: {key} set twice", n + 1)));
            }
            seen.push(key);
            if key == "schema_version" {
                let v: u32 = parse(key, value)?;
                if v != SCHEMA_VERSION {
                    return Err(Error::Config(format!(
                        "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                    )));
                }
                version = Some(v);
                continue;
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        if version.is_none() {
            return Err(Error::Config("missing schema_version".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn unknown(key: &str) -> Error {
    Error::Config(format!("unknown key {key:?}"))
}
