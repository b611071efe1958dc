//! Discriminator and generator objectives over triplet batches.
//!
//! Every triplet `(x_p, t, x_n)` together with a generated `x̂ = G(z, t)`
//! gives the discriminator three pairs:
//!
//! | pair       | kind            | source target | relevance target |
//! |------------|-----------------|---------------|------------------|
//! | `(x_p, t)` | `RealMatch`     | real (1)      | match (1)        |
//! | `(x_n, t)` | `RealMismatch`  | real (1)      | mismatch (0)     |
//! | `(x̂, t)`   | `FakeMatch`     | fake (0)      | match (1)        |
//!
//! Both heads are scored on every pair with binary cross-entropy, so a
//! triplet contributes six terms to the discriminator loss. Losses are
//! averaged over triplets, not over terms.

use crate::numcore::{bce, Tensor};
use crate::triplets::Triplet;
use crate::{Error, Result};

use super::{Discriminator, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    RealMatch,
    RealMismatch,
    FakeMatch,
}

impl PairKind {
    pub const ALL: [PairKind; 3] = [PairKind::RealMatch, PairKind::RealMismatch, PairKind::FakeMatch];

    pub fn source_target(self) -> f64 {
        match self {
            PairKind::RealMatch | PairKind::RealMismatch => 1.0,
            PairKind::FakeMatch => 0.0,
        }
    }

    pub fn relevance_target(self) -> f64 {
        match self {
            PairKind::RealMatch | PairKind::FakeMatch => 1.0,
            PairKind::RealMismatch => 0.0,
        }
    }
}

/// Per-pair targets for a stacked discriminator batch: all `RealMatch`
/// pairs first, then `RealMismatch`, then `FakeMatch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTargets {
    pub kinds: Vec<PairKind>,
}

impl BatchTargets {
    pub fn for_triplets(n: usize) -> Self {
        Self {
            kinds: PairKind::ALL
                .iter()
                .flat_map(|&k| std::iter::repeat_n(k, n))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    /// Multiplies every relevance-head term.
    pub relevance_weight: f64,
    /// Whether the discriminator's relevance head is also trained on
    /// generated pairs (target "match").
    pub fake_relevance_in_d: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            relevance_weight: 1.0,
            fake_relevance_in_d: true,
        }
    }
}

/// The conditioning side of a batch: stacked positive texts and images.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletTensors {
    pub texts: Tensor,
    pub positives: Tensor,
    pub negatives: Tensor,
}

impl TripletTensors {
    pub fn from_triplets(batch: &[Triplet]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Argument("empty triplet batch".into()));
        }
        Ok(Self {
            texts: Tensor::stack_rows(batch.iter().map(|t| t.positive_text.values()))?,
            positives: Tensor::stack_rows(batch.iter().map(|t| t.positive_image.data()))?,
            negatives: Tensor::stack_rows(batch.iter().map(|t| t.negative_image.data()))?,
        })
    }

    pub fn len(&self) -> usize {
        self.texts.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numeric(format!("{what} is {loss}")))
    }
}

fn stack3(a: &Tensor, b: &Tensor, c: &Tensor) -> Result<Tensor> {
    let rows = (0..a.batch())
        .map(|r| a.row(r))
        .chain((0..b.batch()).map(|r| b.row(r)))
        .chain((0..c.batch()).map(|r| c.row(r)));
    Tensor::stack_rows(rows)
}

/// Discriminator loss on given fakes; stores the discriminator's gradients.
pub fn d_loss_on(
    disc: &mut Discriminator,
    batch: &TripletTensors,
    fakes: &Tensor,
    opts: &LossOptions,
) -> Result<f64> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Argument("empty triplet batch".into()));
    }
    if fakes.batch() != n {
        return Err(Error::Dimension(format!("{} fakes for {n} triplets", fakes.batch())));
    }
    let images = stack3(&batch.positives, &batch.negatives, fakes)?;
    let texts = stack3(&batch.texts, &batch.texts, &batch.texts)?;
    let heads = disc.forward(&images, &texts)?;
    let targets = BatchTargets::for_triplets(n);
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; heads.len()];
    for (r, kind) in targets.kinds.iter().enumerate() {
        let out = heads.row(r);
        let (ls, gs) = bce(out[0], kind.source_target());
        let w = if *kind == PairKind::FakeMatch && !opts.fake_relevance_in_d {
            0.0
        } else {
            opts.relevance_weight
        };
        let (lr, gr) = bce(out[1], kind.relevance_target());
        loss += ls + w * lr;
        grad[2 * r] = gs * scale;
        grad[2 * r + 1] = w * gr * scale;
    }
    let loss = finite(loss * scale, "discriminator loss")?;
    disc.backward_params(&Tensor::matrix(3 * n, 2, grad)?)?;
    Ok(loss)
}

/// Generator loss on given fakes, `-log D_s(x̂) - λ log D_r(x̂)` averaged over
/// the batch. Returns the loss and dL/d fakes; discriminator parameter
/// gradients are not touched.
pub fn g_loss_on(
    disc: &mut Discriminator,
    texts: &Tensor,
    fakes: &Tensor,
    opts: &LossOptions,
) -> Result<(f64, Tensor)> {
    let n = fakes.batch();
    if n == 0 {
        return Err(Error::Argument("empty triplet batch".into()));
    }
    let heads = disc.forward(fakes, texts)?;
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; heads.len()];
    for r in 0..n {
        let out = heads.row(r);
        let (ls, gs) = bce(out[0], 1.0);
        let (lr, gr) = bce(out[1], 1.0);
        loss += ls + opts.relevance_weight * lr;
        grad[2 * r] = gs * scale;
        grad[2 * r + 1] = opts.relevance_weight * gr * scale;
    }
    let loss = finite(loss * scale, "generator loss")?;
    let image_grad = disc.backward_to_images(&Tensor::matrix(n, 2, grad)?)?;
    Ok((loss, image_grad))
}

/// Generates fakes for `batch` with `noise` and returns the discriminator
/// loss. Only the discriminator's gradients are written.
pub fn d_loss(
    batch: &[Triplet],
    gen: &Generator,
    disc: &mut Discriminator,
    noise: &Tensor,
    opts: &LossOptions,
) -> Result<f64> {
    let tensors = TripletTensors::from_triplets(batch)?;
    let fakes = gen.infer(&tensors.texts, noise)?;
    d_loss_on(disc, &tensors, &fakes, opts)
}

/// Generator loss for `batch`; writes the generator's gradients by
/// backpropagating through the discriminator.
pub fn g_loss(
    batch: &[Triplet],
    gen: &mut Generator,
    disc: &mut Discriminator,
    noise: &Tensor,
    opts: &LossOptions,
) -> Result<f64> {
    let tensors = TripletTensors::from_triplets(batch)?;
    let fakes = gen.forward(&tensors.texts, noise)?;
    let (loss, image_grad) = g_loss_on(disc, &tensors.texts, &fakes, opts)?;
    gen.backward(&image_grad)?;
    Ok(loss)
}
