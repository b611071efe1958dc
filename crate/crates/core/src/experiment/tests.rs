use std::fs;
use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::gan::{GENERATOR_FILE, METRICS_FILE, STATE_FILE};
use crate::triplets::Strategy;
use crate::Error;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default().with_output_dir(dir);
    for (k, v) in [
        ("classes", "3"),
        ("per_class", "12"),
        ("embed_dim", "8"),
        ("epochs", "2"),
        ("batch_size", "8"),
        ("m_outer", "10"),
        ("noise_dim", "4"),
        ("checkpoint_every", "1"),
        ("eval_every", "1"),
        ("oracle_epochs", "40"),
        ("oracle_min_accuracy", "0.5"),
        ("is_samples", "30"),
        ("is_splits", "3"),
        ("pairs_per_class", "10"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

#[test]
fn defaults_round_trip_through_text() {
    let cfg = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
}

#[test]
fn every_listed_key_is_readable_and_writable() {
    let mut cfg = ExperimentConfig::default();
    for key in KEYS {
        let v = cfg.get(key).unwrap();
        cfg.set(key, &v).unwrap();
    }
    assert_eq!(cfg, ExperimentConfig::default());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_configs_round_trip(
        overlap in 0.0f64..0.99,
        noise in 0.0f64..1.0,
        lr in 1e-6f64..1e-1,
        rw in 0.0f64..10.0,
        beta_start in 0.01f64..1.0,
        epochs in 0usize..10_000,
        seed in any::<u64>(),
        draw_seed in proptest::option::of(any::<u64>()),
        fake in any::<bool>(),
        strategy in 0usize..6,
        seeds in proptest::collection::vec(any::<u64>(), 1..5),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.overlap = overlap;
        cfg.dataset.caption_noise = noise;
        cfg.train.adam.learning_rate = lr;
        cfg.train.loss.relevance_weight = rw;
        cfg.train.curriculum.beta_start = beta_start;
        cfg.train.curriculum.beta = beta_start;
        cfg.train.epochs = epochs;
        cfg.train.seed = seed;
        cfg.train.caption_draw = match draw_seed {
            Some(seed) => crate::triplets::CaptionDraw::PerExample { seed },
            None => crate::triplets::CaptionDraw::PerUse,
        };
        cfg.train.loss.fake_relevance_in_d = fake;
        cfg.train.strategy = Strategy::ALL[strategy];
        cfg.sweep_seeds = seeds;
        let text = cfg.emit();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.emit(), text);
    }
}

#[test]
fn unknown_keys_are_errors() {
    let err = ExperimentConfig::parse("schema_version = 1\nlearning_rat = 0.1\n").unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("learning_rat")), "{err}");
}

#[test]
fn repeated_keys_are_errors() {
    let err = ExperimentConfig::parse("schema_version = 1\nepochs = 3\nepochs = 4\n").unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("twice")), "{err}");
}

#[test]
fn schema_version_is_mandatory_and_checked() {
    assert!(matches!(ExperimentConfig::parse("epochs = 3\n"), Err(Error::Config(_))));
    assert!(matches!(
        ExperimentConfig::parse("schema_version = 2\n"),
        Err(Error::Config(_))
    ));
    let cfg = ExperimentConfig::parse("# only a version\n\nschema_version = 1\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn malformed_values_are_errors() {
    for line in [
        "epochs = -1",
        "fake_relevance_in_d = yes",
        "strategy = hardest",
        "caption_draw = sometimes",
        "no equals sign",
    ] {
        let text = format!("schema_version = 1\n{line}\n");
        assert!(ExperimentConfig::parse(&text).is_err(), "{line}");
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    assert_eq!(exit_code(&Error::Config("x".into())), 2);
    assert_eq!(exit_code(&Error::Argument("x".into())), 2);
    assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
    assert_eq!(exit_code(&Error::Format("x".into())), 4);
    assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
}

#[test]
fn gen_data_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let a = gen_data(&cfg).unwrap();
    let b = gen_data(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.examples, 36);
    let sheet = image::open(&a.contact_sheet).unwrap().to_rgb8();
    let ds = load_configured_dataset(&cfg).unwrap();
    assert_eq!(sheet.dimensions(), contact_sheet(&ds, 8, 3).dimensions());
    // one row of tiles per class
    assert_eq!(sheet.height(), 3 * (16 * 3 + 2) + 2);
}

#[test]
fn commands_report_missing_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let err = train_oracle(&cfg).unwrap_err();
    assert_eq!(exit_code(&err), 4, "{err}");
    gen_data(&cfg).unwrap();
    let err = eval(&cfg, None).unwrap_err();
    assert!(err.to_string().contains("train-oracle"), "{err}");
    let mut other = cfg.clone();
    other.dataset.seed += 1;
    assert!(matches!(load_configured_dataset(&other), Err(Error::Config(_))));
}

#[test]
fn one_epoch_run_logs_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.train.epochs = 1;
    gen_data(&cfg).unwrap();
    let out = train(&cfg, TrainOptions::default()).unwrap();
    assert!(out.finished);
    assert_eq!(out.last_is, None);
    let csv = fs::read_to_string(out.run_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let saved = ExperimentConfig::load(&out.run_dir.join(CONFIG_FILE)).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn halted_runs_resume_to_the_same_result() {
    let whole = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let a = tiny(whole.path());
    let b = tiny(split.path());
    for cfg in [&a, &b] {
        gen_data(cfg).unwrap();
        train_oracle(cfg).unwrap();
    }
    let full = train(&a, TrainOptions::default()).unwrap();
    let first = train(&b, TrainOptions { resume: true, halt_after: Some(1) }).unwrap();
    assert!(!first.finished && !first.resumed);
    assert_eq!(first.epochs_done, 1);
    let second = train(&b, TrainOptions { resume: true, halt_after: None }).unwrap();
    assert!(second.finished && second.resumed);
    assert_eq!(second.last_is, full.last_is);
    for f in [GENERATOR_FILE, METRICS_FILE, STATE_FILE] {
        assert_eq!(
            fs::read(full.run_dir.join(f)).unwrap(),
            fs::read(second.run_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    gen_data(&cfg).unwrap();
    train_oracle(&cfg).unwrap();
    train(&cfg, TrainOptions::default()).unwrap();
    let a = eval(&cfg, None).unwrap();
    let csv = fs::read(a.dir.join("diversity.csv")).unwrap();
    let b = eval(&cfg, Some(&run_dir(&cfg))).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv, fs::read(b.dir.join("diversity.csv")).unwrap());
    for f in ["inception.csv", "diversity.svg", "summary.txt"] {
        assert!(a.dir.join(f).exists(), "{f}");
    }
    assert!(a.inception.score >= 1.0 && a.inception.score <= 3.0 + 1e-9);
    let report = fs::read_to_string(render_report(&cfg).unwrap()).unwrap();
    assert!(report.contains("Oracle held-out accuracy"));
    assert!(report.contains(&run_name(cfg.train.strategy, cfg.train.seed)));
}

#[test]
fn sweep_has_one_row_per_strategy_and_one_score_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.train.epochs = 1;
    cfg.sweep_strategies = vec![Strategy::Random, Strategy::SemiHard];
    gen_data(&cfg).unwrap();
    train_oracle(&cfg).unwrap();
    let out = sweep(&cfg).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert!(out.rows.iter().all(|r| r.scores.len() == 3));
    let csv = fs::read_to_string(out.dir.join("comparison.csv")).unwrap();
    assert_eq!(csv, out.to_csv());
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("strategy,seed_1,seed_2,seed_3,mean,std"));
    for s in [Strategy::Random, Strategy::SemiHard] {
        for seed in [1, 2, 3] {
            assert!(out.dir.join(run_name(s, seed)).join(GENERATOR_FILE).exists());
        }
    }
    let again = sweep(&cfg).unwrap();
    assert_eq!(again.rows, out.rows);
}

#[test]
fn sweep_rejects_a_single_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.sweep_strategies = vec![Strategy::Random];
    assert!(matches!(sweep(&cfg), Err(Error::Config(_))));
}

#[test]
fn sample_std_across_seeds() {
    let row = SweepRow { strategy: Strategy::Random, scores: vec![1.0, 2.0, 3.0] };
    assert_eq!(row.mean(), 2.0);
    assert_eq!(row.std(), 1.0);
    assert_eq!(SweepRow { strategy: Strategy::Random, scores: vec![4.0] }.std(), 0.0);
}
