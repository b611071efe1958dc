use rand::Rng;
use rand_distr::StandardNormal;

use crate::numcore::{Activation, LayerSpec, Network, ParamGrads, Tensor};
use crate::synthdata::{TextEmbedding, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE};
use crate::{Error, Result};

/// Width text embeddings are reduced to before fusion, in both networks.
pub const TEXT_PROJECTION: usize = 16;
pub const DEFAULT_NOISE_DIM: usize = 16;

const G_HIDDEN: [usize; 2] = [128, 256];
const D_TRUNK: [usize; 2] = [256, 128];
const D_FUSION: usize = 64;

fn projection_specs(text_dim: usize) -> [LayerSpec; 1] {
    [LayerSpec::new(text_dim, TEXT_PROJECTION, Activation::Linear)]
}

fn generator_body_specs(noise_dim: usize) -> [LayerSpec; 3] {
    use Activation::*;
    [
        LayerSpec::new(noise_dim + TEXT_PROJECTION, G_HIDDEN[0], LeakyRelu),
        LayerSpec::new(G_HIDDEN[0], G_HIDDEN[1], LeakyRelu),
        LayerSpec::new(G_HIDDEN[1], IMAGE_LEN, Tanh),
    ]
}

fn trunk_specs() -> [LayerSpec; 2] {
    use Activation::*;
    [
        LayerSpec::new(IMAGE_LEN, D_TRUNK[0], LeakyRelu),
        LayerSpec::new(D_TRUNK[0], D_TRUNK[1], LeakyRelu),
    ]
}

fn fusion_specs() -> [LayerSpec; 2] {
    use Activation::*;
    [
        LayerSpec::new(D_TRUNK[1] + TEXT_PROJECTION, D_FUSION, LeakyRelu),
        LayerSpec::new(D_FUSION, 2, Sigmoid),
    ]
}

fn expect_row_width(t: &Tensor, width: usize, what: &str) -> Result<()> {
    if t.width() != width {
        return Err(Error::Dimension(format!(
            "{what} rows have width {}, expected {width}",
            t.width()
        )));
    }
    Ok(())
}

fn expect_same_batch(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.batch() != b.batch() {
        return Err(Error::Dimension(format!(
            "batches of {} and {} rows",
            a.batch(),
            b.batch()
        )));
    }
    Ok(())
}

/// A `[batch, noise_dim]` matrix of unit normals.
pub fn sample_noise<R: Rng + ?Sized>(batch: usize, noise_dim: usize, rng: &mut R) -> Result<Tensor> {
    let data = (0..batch * noise_dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(batch, noise_dim, data)
}

/// Text-conditioned generator: `image = body(concat(z, projection(t)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    noise_dim: usize,
    projection: Network,
    body: Network,
}

impl Generator {
    pub fn random<R: Rng + ?Sized>(text_dim: usize, noise_dim: usize, rng: &mut R) -> Result<Self> {
        let projection = Network::random(&projection_specs(text_dim), rng)?;
        let body = Network::random(&generator_body_specs(noise_dim), rng)?;
        Self::from_networks(projection, body)
    }

    pub fn zeroed(text_dim: usize, noise_dim: usize) -> Result<Self> {
        Self::from_networks(
            Network::zeroed(&projection_specs(text_dim))?,
            Network::zeroed(&generator_body_specs(noise_dim))?,
        )
    }

    /// The noise width is whatever the body takes beyond the projection.
    pub fn from_networks(projection: Network, body: Network) -> Result<Self> {
        if body.input_width() <= projection.output_width() {
            return Err(Error::Dimension(format!(
                "generator body takes {} inputs, leaving no room for noise beside a {}-wide projection",
                body.input_width(),
                projection.output_width()
            )));
        }
        let noise_dim = body.input_width() - projection.output_width();
        if body.output_width() != IMAGE_LEN {
            return Err(Error::Dimension(format!(
                "generator emits {} values, images have {IMAGE_LEN}",
                body.output_width()
            )));
        }
        Ok(Self {
            noise_dim,
            projection,
            body,
        })
    }

    pub fn text_dim(&self) -> usize {
        self.projection.input_width()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn projection(&self) -> &Network {
        &self.projection
    }

    pub fn body(&self) -> &Network {
        &self.body
    }

    pub fn networks(&self) -> [&Network; 2] {
        [&self.projection, &self.body]
    }

    pub fn networks_mut(&mut self) -> [&mut Network; 2] {
        [&mut self.projection, &mut self.body]
    }

    pub fn zero_grads(&mut self) {
        self.networks_mut().into_iter().for_each(Network::zero_grads);
    }

    fn check_inputs(&self, texts: &Tensor, noise: &Tensor) -> Result<()> {
        expect_row_width(texts, self.text_dim(), "text")?;
        expect_row_width(noise, self.noise_dim, "noise")?;
        expect_same_batch(texts, noise)
    }

    /// Batched forward pass that caches activations for [`Generator::backward`].
    /// Returns `[batch, 768]` rows in height-width-channel order.
    pub fn forward(&mut self, texts: &Tensor, noise: &Tensor) -> Result<Tensor> {
        self.check_inputs(texts, noise)?;
        let projected = self.projection.forward(texts)?;
        self.body.forward(&noise.concat_columns(&projected)?)
    }

    pub fn infer(&self, texts: &Tensor, noise: &Tensor) -> Result<Tensor> {
        self.check_inputs(texts, noise)?;
        let projected = self.projection.infer(texts)?;
        self.body.infer(&noise.concat_columns(&projected)?)
    }

    /// Overwrites both networks' gradients given dL/d image for the last
    /// forward batch.
    pub fn backward(&mut self, image_grad: &Tensor) -> Result<()> {
        let input_grad = self.body.backward(image_grad)?;
        let (_, projected_grad) = input_grad.split_columns(self.noise_dim)?;
        self.projection.backward_params(&projected_grad)
    }

    /// One image for `text` with fresh unit-normal noise from `rng`.
    pub fn generate<R: Rng + ?Sized>(&self, text: &TextEmbedding, rng: &mut R) -> Result<Tensor> {
        let noise = sample_noise(1, self.noise_dim, rng)?;
        self.generate_with_noise(text.values(), noise.data())
    }

    /// One `[16, 16, 3]` image from an explicit noise vector.
    pub fn generate_with_noise(&self, text: &[f64], noise: &[f64]) -> Result<Tensor> {
        let texts = Tensor::matrix(1, text.len(), text.to_vec())?;
        let noise = Tensor::matrix(1, noise.len(), noise.to_vec())?;
        let out = self.infer(&texts, &noise)?;
        Tensor::new(vec![IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS], out.into_data())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorOutput {
    /// Probability that the image is real.
    pub source_real: f64,
    /// Probability that the image matches the text.
    pub relevance_match: f64,
}

/// Two-headed discriminator: `heads(concat(trunk(x), projection(t)))`, where
/// column 0 of the output is the source head and column 1 the relevance head.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    projection: Network,
    trunk: Network,
    fusion: Network,
}

impl Discriminator {
    pub fn random<R: Rng + ?Sized>(text_dim: usize, rng: &mut R) -> Result<Self> {
        let trunk = Network::random(&trunk_specs(), rng)?;
        let projection = Network::random(&projection_specs(text_dim), rng)?;
        let fusion = Network::random(&fusion_specs(), rng)?;
        Self::from_networks(projection, trunk, fusion)
    }

    pub fn zeroed(text_dim: usize) -> Result<Self> {
        Self::from_networks(
            Network::zeroed(&projection_specs(text_dim))?,
            Network::zeroed(&trunk_specs())?,
            Network::zeroed(&fusion_specs())?,
        )
    }

    pub fn from_networks(projection: Network, trunk: Network, fusion: Network) -> Result<Self> {
        if trunk.input_width() != IMAGE_LEN {
            return Err(Error::Dimension(format!(
                "trunk takes {} values, images have {IMAGE_LEN}",
                trunk.input_width()
            )));
        }
        if fusion.input_width() != trunk.output_width() + projection.output_width() {
            return Err(Error::Dimension(format!(
                "fusion takes {} inputs but trunk ({}) + projection ({}) give {}",
                fusion.input_width(),
                trunk.output_width(),
                projection.output_width(),
                trunk.output_width() + projection.output_width()
            )));
        }
        if fusion.output_width() != 2 {
            return Err(Error::Dimension(format!(
                "discriminator needs 2 heads, fusion emits {}",
                fusion.output_width()
            )));
        }
        Ok(Self {
            projection,
            trunk,
            fusion,
        })
    }

    pub fn text_dim(&self) -> usize {
        self.projection.input_width()
    }

    pub fn networks(&self) -> [&Network; 3] {
        [&self.projection, &self.trunk, &self.fusion]
    }

    pub fn networks_mut(&mut self) -> [&mut Network; 3] {
        [&mut self.projection, &mut self.trunk, &mut self.fusion]
    }

    pub fn zero_grads(&mut self) {
        self.networks_mut().into_iter().for_each(Network::zero_grads);
    }

    fn check_inputs(&self, images: &Tensor, texts: &Tensor) -> Result<()> {
        expect_row_width(images, IMAGE_LEN, "image")?;
        expect_row_width(texts, self.text_dim(), "text")?;
        expect_same_batch(images, texts)
    }

    /// Batched forward pass with caching; returns `[batch, 2]` probabilities.
    pub fn forward(&mut self, images: &Tensor, texts: &Tensor) -> Result<Tensor> {
        self.check_inputs(images, texts)?;
        let features = self.trunk.forward(images)?;
        let projected = self.projection.forward(texts)?;
        self.fusion.forward(&features.concat_columns(&projected)?)
    }

    pub fn infer(&self, images: &Tensor, texts: &Tensor) -> Result<Tensor> {
        self.check_inputs(images, texts)?;
        let features = self.trunk.infer(images)?;
        let projected = self.projection.infer(texts)?;
        self.fusion.infer(&features.concat_columns(&projected)?)
    }

    /// Overwrites all three networks' gradients from dL/d heads.
    pub fn backward_params(&mut self, head_grad: &Tensor) -> Result<()> {
        let fused = self.fusion.backward(head_grad)?;
        let (feature_grad, projected_grad) = fused.split_columns(self.trunk.output_width())?;
        self.trunk.backward_params(&feature_grad)?;
        self.projection.backward_params(&projected_grad)
    }

    /// dL/d image for the last forward batch. Parameter gradients are left
    /// untouched.
    pub fn backward_to_images(&mut self, head_grad: &Tensor) -> Result<Tensor> {
        let fused = self.fusion.backward_with(head_grad, ParamGrads::Skip)?;
        let (feature_grad, _) = fused.split_columns(self.trunk.output_width())?;
        self.trunk.backward_with(&feature_grad, ParamGrads::Skip)
    }

    pub fn discriminate(&self, image: &Tensor, text: &TextEmbedding) -> Result<DiscriminatorOutput> {
        if image.len() != IMAGE_LEN {
            return Err(Error::Dimension(format!(
                "image has {} values, expected {IMAGE_LEN}",
                image.len()
            )));
        }
        let images = Tensor::matrix(1, IMAGE_LEN, image.data().to_vec())?;
        let texts = Tensor::matrix(1, text.dim(), text.values().to_vec())?;
        let out = self.infer(&images, &texts)?;
        Ok(DiscriminatorOutput {
            source_real: out.data()[0],
            relevance_match: out.data()[1],
        })
    }
}
