use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::numcore::Tensor;
use crate::synthdata::{generate_dataset, DatasetSpec, IMAGE_LEN};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn one_hot(k: usize, of: usize) -> Vec<f64> {
    let mut v = vec![0.0; of];
    v[k] = 1.0;
    v
}

fn unit_image(r: &mut ChaCha8Rng, side: usize) -> Tensor {
    Tensor::new(
        vec![side, side, 3],
        (0..side * side * 3).map(|_| r.random_range(0.0..1.0)).collect(),
    )
    .unwrap()
}

fn single_scale() -> MsSsimConfig {
    MsSsimConfig {
        weights: vec![1.0],
        window: SsimWindow::default(),
    }
}

#[test]
fn uniform_conditionals_score_one() {
    let probs = vec![vec![0.125; 8]; 80];
    let r = inception_score_from_probs(&probs, 10).unwrap();
    assert!((r.score - 1.0).abs() < 1e-12);
    assert!(r.std < 1e-12);
    assert_eq!((r.splits, r.samples), (10, 80));
}

#[test]
fn balanced_one_hot_scores_the_class_count() {
    let probs: Vec<Vec<f64>> = (0..800).map(|i| one_hot(i % 8, 8)).collect();
    for splits in [1, 10] {
        let r = inception_score_from_probs(&probs, splits).unwrap();
        assert!((r.score - 8.0).abs() < 1e-9, "{}", r.score);
    }
}

#[test]
fn single_class_one_hot_scores_one() {
    let probs = vec![one_hot(3, 8); 50];
    let r = inception_score_from_probs(&probs, 5).unwrap();
    assert!((r.score - 1.0).abs() < 1e-12);
}

#[test]
fn inception_score_rejects_bad_splits() {
    let probs = vec![vec![0.5, 0.5]; 4];
    assert!(inception_score_from_probs(&probs, 0).is_err());
    assert!(inception_score_from_probs(&probs, 5).is_err());
    assert!(inception_score_from_probs(&[], 1).is_err());
    assert!(inception_score_from_probs(&[vec![0.5, 0.5], vec![1.0]], 1).is_err());
}

fn random_simplex(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0f64).powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

proptest! {
    #[test]
    fn inception_score_lies_between_one_and_k(seed in any::<u64>(), n in 1usize..60, k in 2usize..10) {
        let mut r = rng(seed);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut r, k)).collect();
        let s = inception_score_from_probs(&probs, 1).unwrap().score;
        prop_assert!(s >= 1.0 - 1e-12 && s <= k as f64 + 1e-9, "{}", s);
    }

    #[test]
    fn single_split_score_ignores_order(seed in any::<u64>(), n in 2usize..40) {
        let mut r = rng(seed);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut r, 5)).collect();
        let mut shuffled = probs.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut r);
        let a = inception_score_from_probs(&probs, 1).unwrap().score;
        let b = inception_score_from_probs(&shuffled, 1).unwrap().score;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn ssim_of_an_image_with_itself_is_one() {
    let mut r = rng(1);
    let w = SsimWindow::default();
    for _ in 0..20 {
        let x = unit_image(&mut r, 16);
        assert_eq!(ssim_single_scale(&x, &x, &w).unwrap(), 1.0);
        assert!((ms_ssim(&x, &x, &MsSsimConfig::default()).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn constant_images_reduce_to_the_luminance_term() {
    let w = SsimWindow::default();
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    for (m1, m2) in [(0.2, 0.7), (0.0, 1.0), (0.5, 0.5), (0.9, 0.1)] {
        let a = Tensor::new(vec![12, 12, 3], vec![m1; 432]).unwrap();
        let b = Tensor::new(vec![12, 12, 3], vec![m2; 432]).unwrap();
        let want = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        let got = ssim_single_scale(&a, &b, &w).unwrap();
        assert!((got - want).abs() < 1e-12, "{m1} {m2}: {got} vs {want}");
    }
}

#[test]
fn similarity_is_symmetric_and_bounded() {
    let mut r = rng(2);
    let w = SsimWindow::default();
    let cfg = MsSsimConfig::default();
    for _ in 0..100 {
        let a = unit_image(&mut r, 16);
        let b = unit_image(&mut r, 16);
        let (s1, s2) = (ssim_single_scale(&a, &b, &w).unwrap(), ssim_single_scale(&b, &a, &w).unwrap());
        let (m1, m2) = (ms_ssim(&a, &b, &cfg).unwrap(), ms_ssim(&b, &a, &cfg).unwrap());
        assert_eq!(s1, s2);
        assert_eq!(m1, m2);
        for v in [s1, m1] {
            assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }
}

#[test]
fn one_scale_with_unit_weight_is_plain_ssim() {
    let mut r = rng(3);
    for _ in 0..30 {
        let a = unit_image(&mut r, 16);
        let b = unit_image(&mut r, 16);
        let s = ssim_single_scale(&a, &b, &SsimWindow::default()).unwrap();
        let m = ms_ssim(&a, &b, &single_scale()).unwrap();
        assert!((s - m).abs() < 1e-12);
    }
}

#[test]
fn undersized_inputs_are_argument_errors() {
    let mut r = rng(4);
    let small = unit_image(&mut r, 6);
    assert!(matches!(
        ssim_single_scale(&small, &small, &SsimWindow::default()),
        Err(crate::Error::Argument(_))
    ));
    let x = unit_image(&mut r, 16);
    let three = MsSsimConfig { weights: vec![0.2, 0.3, 0.5], window: SsimWindow::default() };
    assert!(matches!(ms_ssim(&x, &x, &three), Err(crate::Error::Argument(_))));
    let y = unit_image(&mut r, 15);
    assert!(ms_ssim(&x, &y, &MsSsimConfig::default()).is_err());
}

#[test]
fn downsampling_averages_two_by_two_blocks() {
    let data: Vec<f64> = (0..16).map(|v| v as f64).collect();
    let img = Tensor::new(vec![4, 4, 1], data).unwrap();
    let d = downsample(&img).unwrap();
    assert_eq!(d.shape(), &[2, 2, 1]);
    assert_eq!(d.data(), &[2.5, 4.5, 10.5, 12.5]);
}

#[test]
fn ms_ssim_falls_as_noise_grows() {
    // majority rule over seeds: the noise draws can occasionally reorder
    // neighbouring levels on a 16x16 image
    let cfg = MsSsimConfig::default();
    let mut ordered = 0;
    for seed in 0..50 {
        let mut r = rng(100 + seed);
        let base = unit_image(&mut r, 16);
        let scores: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&sigma| {
                let noisy: Vec<f64> = base
                    .data()
                    .iter()
                    .map(|v| v + sigma * r.sample::<f64, _>(StandardNormal))
                    .collect();
                let noisy = Tensor::new(base.shape().to_vec(), noisy).unwrap();
                ms_ssim(&base, &noisy, &cfg).unwrap()
            })
            .collect();
        if scores[0] >= scores[1] && scores[1] >= scores[2] {
            ordered += 1;
        }
    }
    assert!(ordered > 25, "{ordered} of 50");
}

fn two_class_dataset() -> crate::synthdata::Dataset {
    generate_dataset(&DatasetSpec {
        classes: 2,
        per_class: 40,
        embed_dim: 8,
        overlap: 0.0,
        ..DatasetSpec::default()
    })
    .unwrap()
}

fn image_rows(ds: &crate::synthdata::Dataset) -> Tensor {
    Tensor::stack_rows(ds.examples.iter().map(|e| e.image.data())).unwrap()
}

#[test]
fn oracle_separates_two_classes_perfectly() {
    let ds = two_class_dataset();
    let cfg = OracleConfig { epochs: 10, ..OracleConfig::default() };
    let oracle = train_oracle(&ds, &cfg).unwrap();
    assert_eq!(oracle.accuracy, 1.0);
    assert_eq!(oracle.accuracy_on(&image_rows(&ds), &ds.labels()).unwrap(), 1.0);
    assert_eq!(oracle, train_oracle(&ds, &cfg).unwrap());
}

#[test]
fn oracle_outputs_are_probability_vectors() {
    let ds = two_class_dataset();
    let oracle = train_oracle(&ds, &OracleConfig { epochs: 2, min_accuracy: 0.0, ..OracleConfig::default() }).unwrap();
    let mut r = rng(5);
    let noise = Tensor::matrix(50, IMAGE_LEN, (0..50 * IMAGE_LEN).map(|_| r.random_range(-3.0..3.0)).collect()).unwrap();
    for p in oracle.predict(&noise).unwrap() {
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn oracle_below_threshold_is_a_training_error() {
    let ds = two_class_dataset();
    let cfg = OracleConfig { epochs: 1, min_accuracy: 1.5, ..OracleConfig::default() };
    assert!(matches!(train_oracle(&ds, &cfg), Err(crate::Error::Training(_))));
}

#[test]
fn oracle_round_trips_through_bytes() {
    let ds = two_class_dataset();
    let oracle = train_oracle(&ds, &OracleConfig { epochs: 3, ..OracleConfig::default() }).unwrap();
    let bytes = oracle.encode().unwrap();
    let back = OracleClassifier::decode(&bytes).unwrap();
    assert_eq!(back, oracle);
    assert_eq!(back.encode().unwrap(), bytes);
    assert!(OracleClassifier::decode(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn identical_copies_have_unit_diversity_score() {
    let mut r = rng(6);
    let img: Vec<f64> = (0..IMAGE_LEN).map(|_| r.random_range(-1.0..1.0)).collect();
    let other: Vec<f64> = (0..IMAGE_LEN).map(|_| r.random_range(-1.0..1.0)).collect();
    let rows: Vec<&[f64]> = vec![&img, &img, &img, &other, &img];
    let images = Tensor::stack_rows(rows).unwrap();
    let labels = [0, 0, 0, 1, 2];
    let report = class_diversity_report(&images, &labels, 3, 20, &MsSsimConfig::default(), &mut r).unwrap();
    assert!((report.classes[0].mean_ms_ssim.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report.classes[1].mean_ms_ssim, None);
    assert_eq!(report.classes[2].mean_ms_ssim, None);
    assert_eq!(report.warnings.len(), 2);
    assert_eq!(report.mean(), report.classes[0].mean_ms_ssim);
}

#[test]
fn reports_serialize_one_row_per_class() {
    let ds = generate_dataset(&DatasetSpec { per_class: 10, ..DatasetSpec::default() }).unwrap();
    let train = dataset_diversity(&ds, 5, &MsSsimConfig::default(), &mut rng(7)).unwrap();
    let other = dataset_diversity(&ds, 5, &MsSsimConfig::default(), &mut rng(8)).unwrap();
    let csv = diversity_csv(&train, &other).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    let svg = scatter_svg(&train, &other).unwrap();
    assert_eq!(svg.matches("<circle").count(), 8);
    assert!(svg.contains("training data") && svg.contains("generated data"));
    assert!(svg.contains(&csv));
    assert_eq!(DEFAULT_PAIRS_PER_CLASS, 400);
}

#[test]
fn evaluation_is_reproducible_and_untrained_generators_score_low() {
    let ds = generate_dataset(&DatasetSpec { per_class: 30, ..DatasetSpec::default() }).unwrap();
    let oracle = train_oracle(&ds, &OracleConfig::default()).unwrap();
    let gen = crate::gan::Generator::random(32, 16, &mut rng(9)).unwrap();
    let cfg = EvalConfig { samples: 400, splits: 4, pairs_per_class: 20, ..EvalConfig::default() };
    let a = evaluate_generator(&gen, &oracle, &ds, &cfg, &mut rng(10)).unwrap();
    let b = evaluate_generator(&gen, &oracle, &ds, &cfg, &mut rng(10)).unwrap();
    assert_eq!(a, b);
    assert!(a.inception.score < 2.0, "{}", a.inception.score);
    assert_eq!(a.generated.classes.len(), 8);
    assert!(inception_csv(&a.inception).lines().count() == 1 + 4 + 2);
}
