//! Fully connected networks with a flat parameter store.
//!
//! Each layer computes `y = act(x W^T + b)` with `W` stored row-major as
//! `[out, in]`. All weights and biases of a network live in one contiguous
//! `params` vector (layer by layer, weights before biases) and `grads`
//! mirrors that layout exactly, so optimizers and checkpoints work on flat
//! slices while layers get borrowed views into the same storage.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::Tensor;
use crate::{Error, Result};

/// Slope of the leaky rectifier on the negative side.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's *output*. For the leaky
    /// rectifier the sign of the output equals the sign of the input.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    /// Recovers the pre-activation from the output, where that is unique.
    pub fn preactivation_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => y,
            Activation::LeakyRelu => {
                if y > 0.0 {
                    y
                } else {
                    y / LEAKY_SLOPE
                }
            }
            Activation::Tanh => y.atanh(),
            Activation::Sigmoid => (y / (1.0 - y)).ln(),
        }
    }

    pub fn has_kink(self) -> bool {
        matches!(self, Activation::LeakyRelu)
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::LeakyRelu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Activation::Linear,
            1 => Activation::LeakyRelu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_width: usize, out_width: usize, activation: Activation) -> Self {
        Self {
            in_width,
            out_width,
            activation,
        }
    }

    fn weight_count(&self) -> usize {
        self.in_width * self.out_width
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    spec: LayerSpec,
    weights: usize,
    biases: usize,
}

/// What `backward` should do with parameter gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGrads {
    /// Overwrite `grads` with the gradient of this pass.
    Store,
    /// Leave `grads` untouched; only propagate to the input.
    Skip,
}

/// A chain of dense layers.
#[derive(Debug, Clone)]
pub struct Network {
    slots: Vec<Slot>,
    params: Vec<f64>,
    grads: Vec<f64>,
    // outputs[0] is the input batch, outputs[i + 1] the output of layer i
    cache: Option<(usize, Vec<Vec<f64>>)>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.slots == other.slots && self.params == other.params
    }
}

impl Network {
    /// Builds a network with zero parameters. Fails if consecutive widths
    /// disagree.
    pub fn zeroed(specs: &[LayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        let mut slots = Vec::with_capacity(specs.len());
        let mut offset = 0;
        for (i, spec) in specs.iter().enumerate() {
            if spec.in_width == 0 || spec.out_width == 0 {
                return Err(Error::Dimension(format!("layer {i} has a zero width")));
            }
            if i > 0 && specs[i - 1].out_width != spec.in_width {
                return Err(Error::Dimension(format!(
                    "layer {} outputs {} but layer {i} expects {}",
                    i - 1,
                    specs[i - 1].out_width,
                    spec.in_width
                )));
            }
            let weights = offset;
            let biases = weights + spec.weight_count();
            offset = biases + spec.out_width;
            slots.push(Slot {
                spec: *spec,
                weights,
                biases,
            });
        }
        Ok(Self {
            slots,
            params: vec![0.0; offset],
            grads: vec![0.0; offset],
            cache: None,
        })
    }

    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`,
    /// and zero biases.
    pub fn random<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeroed(specs)?;
        for slot in &net.slots {
            let s = (6.0 / (slot.spec.in_width + slot.spec.out_width) as f64).sqrt();
            let dist = Uniform::new_inclusive(-s, s).expect("finite bound");
            for w in &mut net.params[slot.weights..slot.biases] {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn specs(&self) -> impl ExactSizeIterator<Item = LayerSpec> + '_ {
        self.slots.iter().map(|s| s.spec)
    }

    pub fn layer_count(&self) -> usize {
        self.slots.len()
    }

    pub fn input_width(&self) -> usize {
        self.slots[0].spec.in_width
    }

    pub fn output_width(&self) -> usize {
        self.slots[self.slots.len() - 1].spec.out_width
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    /// Simultaneous access for optimizers.
    pub fn params_and_grads_mut(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.params, &self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.params[s.weights..s.biases]
    }

    pub fn layer_weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = &self.slots[layer];
        &mut self.params[s.weights..s.biases]
    }

    pub fn layer_biases(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.params[s.biases..s.biases + s.spec.out_width]
    }

    pub fn layer_biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = &self.slots[layer];
        &mut self.params[s.biases..s.biases + s.spec.out_width]
    }

    pub fn layer_weight_grads(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.grads[s.weights..s.biases]
    }

    pub fn layer_bias_grads(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.grads[s.biases..s.biases + s.spec.out_width]
    }

    /// Layer that owns flat parameter index `index`.
    pub fn layer_of_param(&self, index: usize) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| index >= s.weights && index < s.biases + s.spec.out_width)
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape().len() > 2 || input.width() != self.input_width() {
            return Err(Error::Dimension(format!(
                "network expects width {}, got tensor of shape {:?}",
                self.input_width(),
                input.shape()
            )));
        }
        Ok(())
    }

    fn run(&self, batch: usize, input: &[f64], keep: bool) -> Vec<Vec<f64>> {
        let mut outputs = Vec::with_capacity(if keep { self.slots.len() + 1 } else { 2 });
        outputs.push(input.to_vec());
        for slot in &self.slots {
            let x = outputs.last().expect("input pushed");
            let y = dense_forward(slot, &self.params, batch, x);
            if keep {
                outputs.push(y);
            } else {
                outputs.clear();
                outputs.push(y);
            }
        }
        outputs
    }

    fn shaped(input: &Tensor, batch: usize, width: usize, data: Vec<f64>) -> Tensor {
        if input.shape().len() == 1 {
            Tensor::vector(data)
        } else {
            Tensor::matrix(batch, width, data).expect("shape computed from layer widths")
        }
    }

    /// Runs the network and caches every layer's output for `backward`.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let batch = input.batch();
        let outputs = self.run(batch, input.data(), true);
        let out = outputs.last().expect("at least one layer").clone();
        self.cache = Some((batch, outputs));
        let out = Self::shaped(input, batch, self.output_width(), out);
        if !out.is_finite() {
            return Err(Error::Numeric("forward produced a non-finite value".into()));
        }
        Ok(out)
    }

    /// Forward pass without touching the cache.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let batch = input.batch();
        let mut outputs = self.run(batch, input.data(), false);
        let out = Self::shaped(input, batch, self.output_width(), outputs.pop().expect("output"));
        if !out.is_finite() {
            return Err(Error::Numeric("forward produced a non-finite value".into()));
        }
        Ok(out)
    }

    /// Backpropagates `output_grad` (dL/d output) through the cached forward
    /// pass and returns dL/d input. With [`ParamGrads::Store`] the parameter
    /// gradient of this pass replaces the contents of `grads`.
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<Tensor> {
        self.backward_with(output_grad, ParamGrads::Store)
    }

    pub fn backward_with(&mut self, output_grad: &Tensor, mode: ParamGrads) -> Result<Tensor> {
        let (batch, delta) = self.propagate(output_grad, mode, true)?;
        let grad = if output_grad.shape().len() == 1 {
            Tensor::vector(delta)
        } else {
            Tensor::matrix(batch, self.input_width(), delta)?
        };
        if !grad.is_finite() {
            return Err(Error::Numeric("backward produced a non-finite value".into()));
        }
        Ok(grad)
    }

    /// Stores parameter gradients without computing dL/d input.
    pub fn backward_params(&mut self, output_grad: &Tensor) -> Result<()> {
        self.propagate(output_grad, ParamGrads::Store, false)?;
        Ok(())
    }

    fn propagate(
        &mut self,
        output_grad: &Tensor,
        mode: ParamGrads,
        want_input: bool,
    ) -> Result<(usize, Vec<f64>)> {
        let (batch, outputs) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let batch = *batch;
        if output_grad.width() != self.output_width() || output_grad.batch() != batch {
            return Err(Error::Dimension(format!(
                "output gradient of shape {:?} does not match cached batch {batch} x {}",
                output_grad.shape(),
                self.output_width()
            )));
        }
        let mut delta = output_grad.data().to_vec();
        for (i, slot) in self.slots.iter().enumerate().rev() {
            let y = &outputs[i + 1];
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= slot.spec.activation.derivative_from_output(yv);
            }
            let x = &outputs[i];
            if mode == ParamGrads::Store {
                dense_param_grads(slot, &mut self.grads, batch, x, &delta);
            }
            if i > 0 || want_input {
                delta = dense_input_grad(slot, &self.params, batch, &delta);
            }
        }
        Ok((batch, delta))
    }

    /// Smallest |pre-activation| over all kinked layers in the cached pass.
    /// `None` when nothing is cached or no layer has a kink.
    pub fn min_kink_distance(&self) -> Option<f64> {
        let (_, outputs) = self.cache.as_ref()?;
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.spec.activation.has_kink())
            .flat_map(|(i, s)| {
                outputs[i + 1]
                    .iter()
                    .map(move |&y| s.spec.activation.preactivation_from_output(y).abs())
            })
            .min_by(f64::total_cmp)
    }
}

fn dense_forward(slot: &Slot, params: &[f64], batch: usize, x: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (slot.spec.in_width, slot.spec.out_width);
    let w = &params[slot.weights..slot.biases];
    let b = &params[slot.biases..slot.biases + n_out];
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(b);
    }
    // y[batch, out] += x[batch, in] * W^T
    unsafe {
        matrixmultiply::dgemm(
            batch,
            n_in,
            n_out,
            1.0,
            x.as_ptr(),
            n_in as isize,
            1,
            w.as_ptr(),
            1,
            n_in as isize,
            1.0,
            y.as_mut_ptr(),
            n_out as isize,
            1,
        );
    }
    let act = slot.spec.activation;
    if act != Activation::Linear {
        y.iter_mut().for_each(|v| *v = act.apply(*v));
    }
    y
}

fn dense_param_grads(slot: &Slot, grads: &mut [f64], batch: usize, x: &[f64], delta: &[f64]) {
    let (n_in, n_out) = (slot.spec.in_width, slot.spec.out_width);
    let (gw, gb) = grads[slot.weights..slot.biases + n_out].split_at_mut(n_out * n_in);
    // dW[out, in] = delta^T[out, batch] * x[batch, in]
    unsafe {
        matrixmultiply::dgemm(
            n_out,
            batch,
            n_in,
            1.0,
            delta.as_ptr(),
            1,
            n_out as isize,
            x.as_ptr(),
            n_in as isize,
            1,
            0.0,
            gw.as_mut_ptr(),
            n_in as isize,
            1,
        );
    }
    gb.iter_mut().for_each(|g| *g = 0.0);
    for row in delta.chunks_exact(n_out) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += d;
        }
    }
}

fn dense_input_grad(slot: &Slot, params: &[f64], batch: usize, delta: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (slot.spec.in_width, slot.spec.out_width);
    let w = &params[slot.weights..slot.biases];
    let mut dx = vec![0.0; batch * n_in];
    // dx[batch, in] = delta[batch, out] * W[out, in]
    unsafe {
        matrixmultiply::dgemm(
            batch,
            n_out,
            n_in,
            1.0,
            delta.as_ptr(),
            n_out as isize,
            1,
            w.as_ptr(),
            n_in as isize,
            1,
            0.0,
            dx.as_mut_ptr(),
            n_in as isize,
            1,
        );
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(n_in: usize, n_out: usize) -> LayerSpec {
        LayerSpec::new(n_in, n_out, Activation::Linear)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Network::zeroed(&[linear(3, 3)]).unwrap();
        let w = net.layer_weights_mut(0);
        w[0] = 1.0;
        w[4] = 1.0;
        w[8] = 1.0;
        let out = net.forward(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_weight_sigmoid_outputs_half() {
        let mut net =
            Network::zeroed(&[LayerSpec::new(4, 5, Activation::Sigmoid)]).unwrap();
        let out = net
            .forward(&Tensor::vector(vec![3.0, -1.0, 7.5, 0.2]))
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        assert!(Network::zeroed(&[linear(3, 4), linear(5, 2)]).is_err());
        let mut net = Network::zeroed(&[linear(3, 4)]).unwrap();
        assert!(matches!(
            net.forward(&Tensor::vector(vec![1.0, 2.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut net = Network::zeroed(&[linear(2, 2)]).unwrap();
        let err = net.backward(&Tensor::vector(vec![1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn linear_weight_gradient_is_cached_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::random(&[linear(3, 1)], &mut rng).unwrap();
        let x = vec![0.5, -2.0, 4.0];
        net.forward(&Tensor::vector(x.clone())).unwrap();
        net.backward(&Tensor::vector(vec![1.0])).unwrap();
        assert_eq!(net.layer_weight_grads(0), x.as_slice());
        assert_eq!(net.layer_bias_grads(0), &[1.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = [
            LayerSpec::new(5, 7, Activation::LeakyRelu),
            LayerSpec::new(7, 3, Activation::Tanh),
        ];
        let mut net = Network::random(&specs, &mut rng).unwrap();
        net.grads_mut().iter_mut().for_each(|g| *g = 9.0);
        let x = Tensor::matrix(2, 5, (0..10).map(|i| i as f64 * 0.1).collect()).unwrap();
        net.forward(&x).unwrap();
        let dx = net.backward(&Tensor::zeros(vec![2, 3])).unwrap();
        assert!(net.grads().iter().all(|&g| g == 0.0));
        assert!(dx.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn skip_mode_leaves_grads_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::random(&[linear(2, 2)], &mut rng).unwrap();
        net.forward(&Tensor::vector(vec![1.0, 1.0])).unwrap();
        net.backward_with(&Tensor::vector(vec![1.0, 1.0]), ParamGrads::Skip)
            .unwrap();
        assert!(net.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn flat_and_layer_views_share_storage() {
        let mut net = Network::zeroed(&[linear(2, 3), linear(3, 1)]).unwrap();
        net.layer_biases_mut(1)[0] = 7.0;
        assert_eq!(*net.params().last().unwrap(), 7.0);
        net.params_mut()[0] = -1.5;
        assert_eq!(net.layer_weights(0)[0], -1.5);
        assert_eq!(net.layer_of_param(0), Some(0));
        assert_eq!(net.layer_of_param(net.param_count() - 1), Some(1));
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Network::random(&[linear(10, 20)], &mut rng).unwrap();
        let s = (6.0f64 / 30.0).sqrt();
        assert!(net.layer_weights(0).iter().all(|w| w.abs() <= s));
        assert!(net.layer_biases(0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn activation_tags_round_trip() {
        for a in [
            Activation::Linear,
            Activation::LeakyRelu,
            Activation::Tanh,
            Activation::Sigmoid,
        ] {
            assert_eq!(Activation::from_tag(a.tag()), Some(a));
        }
        assert_eq!(Activation::from_tag(9), None);
    }
}
