use std::fmt::Write as _;

use rand::Rng;

use crate::gan::Generator;
use crate::numcore::Tensor;
use crate::synthdata::{average_captions, Dataset, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE};
use crate::{Error, Result};

use super::{ms_ssim, to_unit_range, MsSsimConfig};

pub const DEFAULT_PAIRS_PER_CLASS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDiversity {
    pub class: usize,
    pub members: usize,
    /// `None` when the class had fewer than two images.
    pub mean_ms_ssim: Option<f64>,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MSSSIMReport {
    pub classes: Vec<ClassDiversity>,
    pub warnings: Vec<String>,
}

impl MSSSIMReport {
    /// Mean over the classes that could be scored.
    pub fn mean(&self) -> Option<f64> {
        let vals: Vec<f64> = self.classes.iter().filter_map(|c| c.mean_ms_ssim).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn as_image(row: &[f64]) -> Tensor {
    Tensor::new(vec![IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS], row.to_vec()).expect("image row")
}

/// Per-class mean MS-SSIM over `pairs_per_class` uniformly drawn pairs of
/// distinct images. `images` holds `[n, 768]` rows in model range `[-1, 1]`.
pub fn class_diversity_report<R: Rng + ?Sized>(
    images: &Tensor,
    labels: &[usize],
    classes: usize,
    pairs_per_class: usize,
    config: &MsSsimConfig,
    rng: &mut R,
) -> Result<MSSSIMReport> {
    if pairs_per_class == 0 {
        return Err(Error::Argument("pairs_per_class must be at least 1".into()));
    }
    if images.width() != IMAGE_LEN || images.batch() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} image rows of width {}",
            labels.len(),
            images.batch(),
            images.width()
        )));
    }
    let mut report = MSSSIMReport {
        classes: Vec::with_capacity(classes),
        warnings: Vec::new(),
    };
    for k in 0..classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if members.len() < 2 {
            report.warnings.push(format!(
                "class {k} has {} image(s); skipped",
                members.len()
            ));
            report.classes.push(ClassDiversity {
                class: k,
                members: members.len(),
                mean_ms_ssim: None,
                pairs: 0,
            });
            continue;
        }
        let unit: Vec<Tensor> = members
            .iter()
            .map(|&i| to_unit_range(&as_image(images.row(i))))
            .collect();
        let mut total = 0.0;
        for _ in 0..pairs_per_class {
            let a = rng.random_range(0..unit.len());
            let mut b = rng.random_range(0..unit.len() - 1);
            if b >= a {
                b += 1;
            }
            total += ms_ssim(&unit[a], &unit[b], config)?;
        }
        report.classes.push(ClassDiversity {
            class: k,
            members: members.len(),
            mean_ms_ssim: Some(total / pairs_per_class as f64),
            pairs: pairs_per_class,
        });
    }
    Ok(report)
}

/// Diversity of the dataset's own images.
pub fn dataset_diversity<R: Rng + ?Sized>(
    ds: &Dataset,
    pairs_per_class: usize,
    config: &MsSsimConfig,
    rng: &mut R,
) -> Result<MSSSIMReport> {
    let images = Tensor::stack_rows(ds.examples.iter().map(|e| e.image.data()))?;
    class_diversity_report(&images, &ds.labels(), ds.class_count(), pairs_per_class, config, rng)
}

/// `count` generated images, each conditioned on the averaged captions of a
/// uniformly drawn training example and labelled with that example's class.
pub fn generate_samples<R: Rng + ?Sized>(
    gen: &Generator,
    ds: &Dataset,
    count: usize,
    n_captions: usize,
    rng: &mut R,
) -> Result<(Tensor, Vec<usize>)> {
    if count == 0 || ds.is_empty() {
        return Err(Error::Argument("need a positive sample count and a nonempty dataset".into()));
    }
    const CHUNK: usize = 500;
    let mut data = Vec::with_capacity(count * IMAGE_LEN);
    let mut labels = Vec::with_capacity(count);
    let mut done = 0;
    while done < count {
        let n = CHUNK.min(count - done);
        let mut texts = Vec::with_capacity(n);
        for _ in 0..n {
            let ex = &ds.examples[rng.random_range(0..ds.len())];
            texts.push(average_captions(ex, n_captions, rng)?);
            labels.push(ex.label);
        }
        let texts = Tensor::stack_rows(texts.iter().map(|t| t.values()))?;
        let noise = crate::gan::sample_noise(n, gen.noise_dim(), rng)?;
        data.extend_from_slice(gen.infer(&texts, &noise)?.data());
        done += n;
    }
    Ok((Tensor::matrix(count, IMAGE_LEN, data)?, labels))
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per class: training and generated mean MS-SSIM side by side.
pub fn diversity_csv(training: &MSSSIMReport, generated: &MSSSIMReport) -> Result<String> {
    if training.classes.len() != generated.classes.len() {
        return Err(Error::Dimension("reports cover different class counts".into()));
    }
    let mut s = String::from("class,training_ms_ssim,generated_ms_ssim,training_pairs,generated_pairs\n");
    for (t, g) in training.classes.iter().zip(&generated.classes) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            t.class,
            cell(t.mean_ms_ssim),
            cell(g.mean_ms_ssim),
            t.pairs,
            g.pairs
        );
    }
    Ok(s)
}

/// Per-class scatter of training (x) against generated (y) MS-SSIM with the
/// identity line, as a standalone SVG that embeds its data as a comment.
pub fn scatter_svg(training: &MSSSIMReport, generated: &MSSSIMReport) -> Result<String> {
    let csv = diversity_csv(training, generated)?;
    let (size, pad) = (400.0, 50.0);
    let span = size - 2.0 * pad;
    let px = |v: f64| pad + v.clamp(0.0, 1.0) * span;
    let py = |v: f64| size - pad - v.clamp(0.0, 1.0) * span;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, "<!-- data\n{csv}-->");
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{v}</text>"#,
            px(v),
            size - pad + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{v}</text>"#,
            pad - 4.0,
            py(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">training data</text>"#,
        size / 2.0,
        size - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">generated data</text>"#,
        size / 2.0,
        size / 2.0
    );
    for (t, g) in training.classes.iter().zip(&generated.classes) {
        if let (Some(x), Some(y)) = (t.mean_ms_ssim, g.mean_ms_ssim) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>class {}</title></circle>"#,
                px(x),
                py(y),
                t.class
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn inception_csv(report: &super::ISReport) -> String {
    let mut s = String::from("split,score\n");
    for (i, v) in report.split_scores.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    let _ = writeln!(s, "mean,{}", report.score);
    let _ = writeln!(s, "std,{}", report.std);
    s
}
