//! Structural similarity on `[height, width, channels]` images with values
//! in `[0, 1]`.
//!
//! Statistics come from a normalized Gaussian window evaluated at every
//! position where it fits entirely inside the image. Each channel is scored
//! separately, negative channel scores are clipped to zero, and channel
//! scores are averaged.

use crate::numcore::Tensor;
use crate::{Error, Result};

pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
/// Dynamic range of the inputs.
pub const DYNAMIC_RANGE: f64 = 1.0;

/// First two of the standard five-scale exponents, renormalized to sum to 1.
pub const MS_SSIM_WEIGHTS: [f64; 2] = [0.0448 / 0.3304, 0.2856 / 0.3304];

#[derive(Debug, Clone, PartialEq)]
pub struct SsimWindow {
    size: usize,
    weights: Vec<f64>,
}

impl SsimWindow {
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        if size == 0 || !(sigma > 0.0) {
            return Err(Error::Argument(format!(
                "window needs a positive size and sigma, got {size} and {sigma}"
            )));
        }
        let c = (size as f64 - 1.0) / 2.0;
        let mut weights = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
                weights.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

impl Default for SsimWindow {
    /// 7×7, σ = 1.5.
    fn default() -> Self {
        Self::gaussian(7, 1.5).expect("valid window")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsSsimConfig {
    /// One exponent per scale, finest first.
    pub weights: Vec<f64>,
    pub window: SsimWindow,
}

impl Default for MsSsimConfig {
    fn default() -> Self {
        Self {
            weights: MS_SSIM_WEIGHTS.to_vec(),
            window: SsimWindow::default(),
        }
    }
}

/// Maps model-range pixels `[-1, 1]` onto `[0, 1]`.
pub fn to_unit_range(image: &Tensor) -> Tensor {
    let data = image.data().iter().map(|v| (v + 1.0) / 2.0).collect();
    Tensor::new(image.shape().to_vec(), data).expect("same shape")
}

fn dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::Dimension(format!(
            "expected a [height, width, channels] image, got shape {s:?}"
        ))),
    }
}

/// 2×2 average pooling; odd trailing rows and columns are dropped.
pub fn downsample(image: &Tensor) -> Result<Tensor> {
    let (h, w, c) = dims(image)?;
    let (h2, w2) = (h / 2, w / 2);
    if h2 == 0 || w2 == 0 {
        return Err(Error::Argument(format!("cannot halve a {h}x{w} image")));
    }
    let d = image.data();
    let at = |y: usize, x: usize, ch: usize| d[(y * w + x) * c + ch];
    let mut out = Vec::with_capacity(h2 * w2 * c);
    for y in 0..h2 {
        for x in 0..w2 {
            for ch in 0..c {
                let s = at(2 * y, 2 * x, ch)
                    + at(2 * y, 2 * x + 1, ch)
                    + at(2 * y + 1, 2 * x, ch)
                    + at(2 * y + 1, 2 * x + 1, ch);
                out.push(s / 4.0);
            }
        }
    }
    Tensor::new(vec![h2, w2, c], out)
}

/// Per-channel `(mean ssim, mean contrast-structure)` over window positions.
fn channel_terms(a: &Tensor, b: &Tensor, window: &SsimWindow) -> Result<Vec<(f64, f64)>> {
    let (h, w, c) = dims(a)?;
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "cannot compare images of shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let k = window.size;
    if h < k || w < k {
        return Err(Error::Argument(format!(
            "{h}x{w} image is smaller than the {k}x{k} window"
        )));
    }
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let (da, db) = (a.data(), b.data());
    let positions = ((h - k + 1) * (w - k + 1)) as f64;
    let mut out = Vec::with_capacity(c);
    for ch in 0..c {
        let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let g = window.weights[dy * k + dx];
                        let i = ((y0 + dy) * w + x0 + dx) * c + ch;
                        let (va, vb) = (da[i], db[i]);
                        ma += g * va;
                        mb += g * vb;
                        saa += g * (va * va);
                        sbb += g * (vb * vb);
                        sab += g * (va * vb);
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                let cov = sab - ma * mb;
                let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
                ssim_sum += lum * cs;
                cs_sum += cs;
            }
        }
        out.push((ssim_sum / positions, cs_sum / positions));
    }
    Ok(out)
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

pub fn ssim_single_scale(a: &Tensor, b: &Tensor, window: &SsimWindow) -> Result<f64> {
    let terms = channel_terms(a, b, window)?;
    Ok(mean(terms.iter().map(|&(s, _)| s.max(0.0))))
}

/// Multi-scale similarity: contrast-structure terms at every scale but the
/// coarsest, full SSIM at the coarsest, each raised to its scale's weight.
pub fn ms_ssim(a: &Tensor, b: &Tensor, config: &MsSsimConfig) -> Result<f64> {
    let scales = config.weights.len();
    if scales == 0 {
        return Err(Error::Argument("ms_ssim needs at least one scale".into()));
    }
    let (h, w, _) = dims(a)?;
    let k = config.window.size;
    let coarsest = (h >> (scales - 1), w >> (scales - 1));
    if coarsest.0 < k || coarsest.1 < k {
        return Err(Error::Argument(format!(
            "{scales} scales shrink a {h}x{w} image to {}x{}, below the {k}x{k} window",
            coarsest.0, coarsest.1
        )));
    }
    let mut per_channel: Option<Vec<f64>> = None;
    let (mut x, mut y) = (a.clone(), b.clone());
    for (s, &weight) in config.weights.iter().enumerate() {
        let terms = channel_terms(&x, &y, &config.window)?;
        let last = s + 1 == scales;
        let acc = per_channel.get_or_insert_with(|| vec![1.0; terms.len()]);
        for (p, &(ssim, cs)) in acc.iter_mut().zip(&terms) {
            let v = if last { ssim } else { cs };
            *p *= v.max(0.0).powf(weight);
        }
        if !last {
            x = downsample(&x)?;
            y = downsample(&y)?;
        }
    }
    let acc = per_channel.expect("at least one scale");
    Ok(mean(acc.into_iter()))
}
