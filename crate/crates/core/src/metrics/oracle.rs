//! A small classifier standing in for a pretrained recognition network.
//!
//! Oracle files are `"SGOC" | version u16 | held-out accuracy f64 | classes
//! u32 | checkpoint bytes` where the checkpoint holds a single block.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{usize_to_u32, Reader, Writer};
use crate::io_util::write_atomic;
use crate::numcore::{
    decode_checkpoint, encode_checkpoint, softmax, softmax_cross_entropy, Activation, AdamConfig,
    AdamState, CheckpointBlock, LayerSpec, Network, Tensor,
};
use crate::synthdata::{Dataset, IMAGE_LEN};
use crate::{Error, Result};

const ORACLE_MAGIC: &[u8; 4] = b"SGOC";
const ORACLE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of each class held out for the accuracy check.
    pub holdout: f64,
    pub min_accuracy: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            holdout: 0.2,
            min_accuracy: 0.95,
            seed: 11,
        }
    }
}

/// Image classifier returning a probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleClassifier {
    network: Network,
    /// Accuracy on the held-out split at the end of training.
    pub accuracy: f64,
}

impl OracleClassifier {
    pub fn from_network(network: Network, accuracy: f64) -> Result<Self> {
        if network.input_width() != IMAGE_LEN || network.output_width() < 2 {
            return Err(Error::Dimension(format!(
                "oracle maps {} values to {} classes; needs {IMAGE_LEN} values and >= 2 classes",
                network.input_width(),
                network.output_width()
            )));
        }
        Ok(Self { network, accuracy })
    }

    pub fn classes(&self) -> usize {
        self.network.output_width()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// `p(y | x)` for each row of `images` (`[n, 768]`).
    pub fn predict(&self, images: &Tensor) -> Result<Vec<Vec<f64>>> {
        if images.width() != IMAGE_LEN {
            return Err(Error::Dimension(format!(
                "oracle expects {IMAGE_LEN}-value images, got rows of {}",
                images.width()
            )));
        }
        let logits = self.network.infer(images)?;
        Ok((0..logits.batch()).map(|r| softmax(logits.row(r))).collect())
    }

    /// Most probable class per row.
    pub fn classify(&self, images: &Tensor) -> Result<Vec<usize>> {
        Ok(self.predict(images)?.iter().map(|p| argmax(p)).collect())
    }

    pub fn accuracy_on(&self, images: &Tensor, labels: &[usize]) -> Result<f64> {
        if images.batch() != labels.len() {
            return Err(Error::Dimension("one label per image".into()));
        }
        let hits = self
            .classify(images)?
            .iter()
            .zip(labels)
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(ORACLE_MAGIC);
        w.u16(ORACLE_VERSION);
        w.f64(self.accuracy);
        w.u32(usize_to_u32(self.classes(), "class count")?);
        w.bytes(&encode_checkpoint(&[CheckpointBlock {
            network: self.network.clone(),
            adam: None,
        }])?);
        Ok(w.into_inner())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(ORACLE_MAGIC)?;
        r.expect_version(ORACLE_VERSION)?;
        let accuracy = r.f64()?;
        let classes = r.u32()? as usize;
        let rest = r.take(r.remaining())?;
        let mut blocks = decode_checkpoint(rest)?;
        if blocks.len() != 1 {
            return Err(Error::Format(format!("oracle holds {} networks", blocks.len())));
        }
        let oracle = Self::from_network(blocks.remove(0).network, accuracy)?;
        if oracle.classes() != classes {
            return Err(Error::Format("oracle class count disagrees with its network".into()));
        }
        Ok(oracle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Per-class split of example ids into (train, held out).
fn stratified_split(ds: &Dataset, holdout: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..ds.class_count() {
        let mut ids: Vec<usize> = (0..ds.len()).filter(|&i| ds.examples[i].label == k).collect();
        ids.shuffle(rng);
        let n_test = ((ids.len() as f64 * holdout).round() as usize).clamp(1, ids.len() - 1);
        test.extend_from_slice(&ids[..n_test]);
        train.extend_from_slice(&ids[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn image_rows(ds: &Dataset, ids: &[usize]) -> Result<Tensor> {
    Tensor::stack_rows(ids.iter().map(|&i| ds.examples[i].image.data()))
}

/// Trains `[768 → hidden (leaky) → K]` with softmax cross-entropy, then
/// checks held-out accuracy against `min_accuracy`.
pub fn train_oracle(ds: &Dataset, config: &OracleConfig) -> Result<OracleClassifier> {
    let classes = ds.class_count();
    if classes < 2 {
        return Err(Error::Argument("oracle needs at least 2 classes".into()));
    }
    if ds.examples.iter().any(|e| e.image.len() != IMAGE_LEN) {
        return Err(Error::Dimension("dataset images are not 16x16x3".into()));
    }
    if config.batch_size == 0 || config.hidden == 0 {
        return Err(Error::Config("oracle batch_size and hidden must be positive".into()));
    }
    if !(config.holdout > 0.0 && config.holdout < 1.0) {
        return Err(Error::Config("oracle holdout must lie in (0, 1)".into()));
    }
    for k in 0..classes {
        if ds.examples.iter().filter(|e| e.label == k).count() < 2 {
            return Err(Error::Argument(format!("class {k} has fewer than 2 examples")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train, test) = stratified_split(ds, config.holdout, &mut rng);
    let specs = [
        LayerSpec::new(IMAGE_LEN, config.hidden, Activation::LeakyRelu),
        LayerSpec::new(config.hidden, classes, Activation::Linear),
    ];
    let mut net = Network::random(&specs, &mut rng)?;
    let adam_cfg = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: 0.9,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::for_network(&net, adam_cfg);
    let mut order = train.clone();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let x = image_rows(ds, chunk)?;
            let logits = net.forward(&x)?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grad = Vec::with_capacity(logits.len());
            for (r, &i) in chunk.iter().enumerate() {
                let (_, g) = softmax_cross_entropy(logits.row(r), ds.examples[i].label);
                grad.extend(g.into_iter().map(|v| v * scale));
            }
            net.backward_params(&Tensor::matrix(chunk.len(), classes, grad)?)?;
            adam.step(&mut net)?;
        }
    }
    let mut oracle = OracleClassifier::from_network(net, 0.0)?;
    let labels: Vec<usize> = test.iter().map(|&i| ds.examples[i].label).collect();
    oracle.accuracy = oracle.accuracy_on(&image_rows(ds, &test)?, &labels)?;
    if oracle.accuracy < config.min_accuracy {
        return Err(Error::Training(format!(
            "oracle reached only {:.4} held-out accuracy (need {}); make classes easier to \
             tell apart (lower overlap or render noise) or train the oracle longer",
            oracle.accuracy, config.min_accuracy
        )));
    }
    Ok(oracle)
}
