//! Procedural caption-conditioned image dataset.
//!
//! Every class `k` has a unit prototype `p_k = sqrt(1 - ρ) u_k + sqrt(ρ) c`
//! built from orthonormal directions `u_0..u_{K-1}, c`, so any two
//! prototypes have cosine similarity exactly `ρ` and distance
//! `sqrt(2 (1 - ρ))`. A caption is its class prototype plus isotropic
//! Gaussian noise. An example owns ten captions, and its image is rendered
//! from its label and the mean of those captions.
//!
//! Rendering is a pure function: channel 0 and channel 1 carry colour fields
//! driven by two disjoint blocks of embedding coordinates, channel 2 carries
//! an oriented grating whose orientation is fixed by the label and whose
//! frequency is driven by a third block. Pixel noise is seeded from the
//! rendering inputs themselves, so re-rendering is exact.

mod format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numcore::Tensor;
use crate::{Error, Result};

pub use format::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC};

pub const IMAGE_SIDE: usize = 16;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS;
pub const CAPTIONS_PER_EXAMPLE: usize = 10;

/// A caption embedding. Never the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding(Vec<f64>);

impl TextEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("empty text embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("text embedding has a non-finite entry".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Numeric("text embedding is the zero vector".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// `[16, 16, 3]`, entries in `[-1, 1]`.
    pub image: Tensor,
    pub label: usize,
    pub captions: Vec<TextEmbedding>,
}

impl LabeledExample {
    /// Mean of all captions; the example's position in text space.
    pub fn mean_caption(&self) -> Vec<f64> {
        mean_of(self.captions.iter().map(|c| c.values()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub classes: usize,
    pub per_class: usize,
    pub embed_dim: usize,
    /// Pairwise cosine similarity of class prototypes, in `[0, 1)`.
    pub overlap: f64,
    pub caption_noise: f64,
    pub render_noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 200,
            embed_dim: 32,
            overlap: 0.5,
            caption_noise: 0.1,
            render_noise: 0.02,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Argument("need at least 2 classes".into()));
        }
        if self.embed_dim < 4 {
            return Err(Error::Argument("embedding dimension must be at least 4".into()));
        }
        if self.classes + 1 > self.embed_dim {
            return Err(Error::Argument(format!(
                "{} classes need an embedding dimension of at least {}",
                self.classes,
                self.classes + 1
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Argument(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        if !(self.caption_noise >= 0.0 && self.caption_noise.is_finite()) {
            return Err(Error::Argument("caption noise must be finite and >= 0".into()));
        }
        if !(self.render_noise >= 0.0 && self.render_noise.is_finite()) {
            return Err(Error::Argument("render noise must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Distance between any two class prototypes.
    pub fn prototype_distance(&self) -> f64 {
        (2.0 * (1.0 - self.overlap)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_count(&self) -> usize {
        self.examples.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }
}

/// Class prototypes for `spec`, one unit vector per class.
pub fn class_prototypes(spec: &DatasetSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis = orthonormal_basis(spec.classes + 1, spec.embed_dim, &mut rng);
    let (axes, center) = basis.split_at(spec.classes);
    let a = (1.0 - spec.overlap).sqrt();
    let b = spec.overlap.sqrt();
    Ok(axes
        .iter()
        .map(|u| u.iter().zip(&center[0]).map(|(ui, ci)| a * ui + b * ci).collect())
        .collect())
}

fn orthonormal_basis<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        // two passes of Gram-Schmidt for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= d * bi);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Deterministic dataset for `spec`: examples ordered by class, then index.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let prototypes = class_prototypes(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_da7a_0000_0001);
    let mut examples = Vec::with_capacity(spec.classes * spec.per_class);
    for (label, proto) in prototypes.iter().enumerate() {
        for _ in 0..spec.per_class {
            let captions = (0..CAPTIONS_PER_EXAMPLE)
                .map(|_| {
                    let v = proto
                        .iter()
                        .map(|&p| {
                            let n: f64 = StandardNormal.sample(&mut rng);
                            p + spec.caption_noise * n
                        })
                        .collect();
                    TextEmbedding::new(v)
                })
                .collect::<Result<Vec<_>>>()?;
            let text = mean_of(captions.iter().map(|c| c.values()));
            let image = render(label, &text, spec.render_noise);
            examples.push(LabeledExample {
                image,
                label,
                captions,
            });
        }
    }
    Ok(Dataset {
        spec: *spec,
        examples,
    })
}

/// Renders a `[16, 16, 3]` image in `[-1, 1]` from a class label and a text
/// vector. Pure: identical inputs give bit-identical images.
pub fn render(label: usize, text: &[f64], render_noise: f64) -> Tensor {
    let e = text.len();
    let q = (e / 4).max(1);
    let block = |k: usize| -> f64 {
        let s: f64 = text[k * q..((k + 1) * q).min(e)].iter().sum();
        s / (q as f64).sqrt()
    };
    let hue_a = (1.5 * block(0)).tanh();
    let hue_b = (1.5 * block(1)).tanh();
    let freq = 1.5 + 0.75 * (1.0 + block(2).tanh());

    // label orientations are spread over a half turn
    let theta = std::f64::consts::PI * (label % 8) as f64 / 8.0 + 0.37 * (label / 8) as f64;
    let (s, c) = theta.sin_cos();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(render_seed(label, text));
    let side = IMAGE_SIDE as f64;
    let mid = (side - 1.0) / 2.0;
    let mut data = Vec::with_capacity(IMAGE_LEN);
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let (dx, dy) = ((x as f64 - mid) / side, (y as f64 - mid) / side);
            let r2 = dx * dx + dy * dy;
            let ch0 = 0.6 * hue_a + 0.3 * dy * 2.0;
            let ch1 = 0.7 * hue_b * (-6.0 * r2).exp() - 0.1;
            let phase = 2.0 * std::f64::consts::PI * freq * (dx * c + dy * s);
            let ch2 = 0.8 * phase.cos();
            for v in [ch0, ch1, ch2] {
                let n: f64 = if render_noise > 0.0 {
                    StandardNormal.sample(&mut noise_rng)
                } else {
                    0.0
                };
                data.push((v + render_noise * n).clamp(-1.0, 1.0));
            }
        }
    }
    Tensor::new(vec![IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS], data).expect("fixed image shape")
}

fn render_seed(label: usize, text: &[f64]) -> u64 {
    // FNV-1a over the label and the exact bit patterns of the text vector
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    mix(&(label as u64).to_le_bytes());
    for v in text {
        mix(&v.to_bits().to_le_bytes());
    }
    h
}

/// Mean of `n` distinct captions drawn uniformly without replacement.
pub fn average_captions<R: Rng + ?Sized>(
    ex: &LabeledExample,
    n: usize,
    rng: &mut R,
) -> Result<TextEmbedding> {
    let total = ex.captions.len();
    if n == 0 || n > total {
        return Err(Error::Argument(format!(
            "cannot average {n} of {total} captions"
        )));
    }
    let picked = draw_caption_indices(total, n, rng);
    TextEmbedding::new(mean_of(picked.iter().map(|&i| ex.captions[i].values())))
}

/// Partial Fisher-Yates draw of `n` distinct indices from `0..total`,
/// returned in ascending order.
pub fn draw_caption_indices<R: Rng + ?Sized>(total: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..total).collect();
    for i in 0..n {
        let j = rng.random_range(i..total);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

/// Row-major `[rows, cols]` matrix used to project text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Projection {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        (0..n).for_each(|i| data[i * n + i] = 1.0);
        Self {
            rows: n,
            cols: n,
            data,
        }
    }
}

/// `P · t`. The result may be the zero vector, so it is returned raw; wrap
/// it in [`TextEmbedding::new`] before using it as conditioning.
pub fn project_embedding(t: &TextEmbedding, p: &Projection) -> Result<Vec<f64>> {
    if p.cols != t.dim() || p.data.len() != p.rows * p.cols {
        return Err(Error::Dimension(format!(
            "projection {}x{} cannot apply to a {}-dim embedding",
            p.rows,
            p.cols,
            t.dim()
        )));
    }
    Ok(p.data
        .chunks_exact(p.cols)
        .map(|row| dot(row, t.values()))
        .collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mean_of<'a, I>(rows: I) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        acc.iter_mut().zip(r).for_each(|(a, &v)| *a += v);
        n += 1;
    }
    let inv = 1.0 / n.max(1) as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}
