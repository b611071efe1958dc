use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gan::{load_generator, Trainer, METRICS_FILE, STATE_FILE};
use crate::io_util::write_atomic;
use crate::metrics::{
    dataset_diversity, diversity_csv, evaluate_generator, inception_csv, scatter_svg,
    train_oracle as fit_oracle, ISReport, MSSSIMReport, MsSsimConfig, OracleClassifier,
    OracleEvaluator,
};
use crate::synthdata::{generate_dataset, load_dataset, save_dataset, Dataset, IMAGE_SIDE};
use crate::triplets::Strategy;
use crate::{Error, Result};

use super::ExperimentConfig;

pub const DATASET_FILE: &str = "dataset.sgds";
pub const CONTACT_SHEET_FILE: &str = "contact_sheet.png";
pub const ORACLE_FILE: &str = "oracle.sgoc";
pub const CONFIG_FILE: &str = "config.txt";
pub const EVAL_DIR: &str = "eval";
pub const SWEEP_DIR: &str = "sweep";
pub const REPORT_FILE: &str = "report.md";

/// Process exit status for a failed command: 2 for configuration problems,
/// 3 for numeric divergence, 4 for I/O and file-format failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        Error::Io(_) | Error::Format(_) | Error::Version { .. } | Error::Checksum { .. } => 4,
        _ => 2,
    }
}

fn missing(path: &Path, hint: &str) -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::NotFound,
        format!("{} not found; {hint}", path.display()),
    ))
}

pub fn run_name(strategy: Strategy, seed: u64) -> String {
    format!("{strategy}-seed{seed}")
}

/// Directory of the run selected by the config's strategy and seed.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .join("runs")
        .join(run_name(cfg.train.strategy, cfg.train.seed))
}

/// Loads the dataset written by `gen-data` and checks it matches the config.
pub fn load_configured_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = cfg.output_dir.join(DATASET_FILE);
    if !path.exists() {
        return Err(missing(&path, "run gen-data first"));
    }
    let ds = load_dataset(&path)?;
    if ds.spec != cfg.dataset {
        return Err(Error::Config(format!(
            "{} was generated from a different dataset spec; rerun gen-data",
            path.display()
        )));
    }
    Ok(ds)
}

pub fn load_configured_oracle(cfg: &ExperimentConfig) -> Result<OracleClassifier> {
    let path = cfg.output_dir.join(ORACLE_FILE);
    if !path.exists() {
        return Err(missing(&path, "run train-oracle first"));
    }
    OracleClassifier::load(&path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataOutput {
    pub dataset: PathBuf,
    pub contact_sheet: PathBuf,
    pub crc: u32,
    pub examples: usize,
}

/// Tiles the first `per_row` images of every class, one class per row.
pub fn contact_sheet(ds: &Dataset, per_row: usize, scale: u32) -> image::RgbImage {
    let gap = 2;
    let tile = IMAGE_SIDE as u32 * scale;
    let classes = ds.class_count() as u32;
    let (w, h) = (
        per_row as u32 * (tile + gap) + gap,
        classes * (tile + gap) + gap,
    );
    let mut img = image::RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]));
    for k in 0..ds.class_count() {
        let members = ds.examples.iter().filter(|e| e.label == k).take(per_row);
        for (col, ex) in members.enumerate() {
            let d = ex.image.data();
            let (x0, y0) = (gap + col as u32 * (tile + gap), gap + k as u32 * (tile + gap));
            for y in 0..tile {
                for x in 0..tile {
                    let i = ((y / scale) as usize * IMAGE_SIDE + (x / scale) as usize) * 3;
                    let px = |v: f64| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
                    img.put_pixel(x0 + x, y0 + y, image::Rgb([px(d[i]), px(d[i + 1]), px(d[i + 2])]));
                }
            }
        }
    }
    img
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<GenDataOutput> {
    cfg.validate()?;
    let ds = generate_dataset(&cfg.dataset)?;
    let dataset = cfg.output_dir.join(DATASET_FILE);
    save_dataset(&ds, &dataset)?;
    let mut png = Vec::new();
    contact_sheet(&ds, 8, 3)
        .write_to(&mut io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| Error::Io(io::Error::other(e)))?;
    let contact_sheet = cfg.output_dir.join(CONTACT_SHEET_FILE);
    write_atomic(&contact_sheet, &png)?;
    Ok(GenDataOutput {
        crc: crc32fast::hash(&fs::read(&dataset)?),
        dataset,
        contact_sheet,
        examples: ds.len(),
    })
}

pub fn train_oracle(cfg: &ExperimentConfig) -> Result<OracleClassifier> {
    cfg.validate()?;
    let ds = load_configured_dataset(cfg)?;
    let oracle = fit_oracle(&ds, &cfg.oracle)?;
    oracle.save(&cfg.output_dir.join(ORACLE_FILE))?;
    Ok(oracle)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Continue from the run directory's checkpoint when one exists.
    pub resume: bool,
    /// Stop after this many completed epochs (the run stays resumable).
    pub halt_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub run_dir: PathBuf,
    pub epochs_done: usize,
    pub finished: bool,
    pub resumed: bool,
    pub last_is: Option<f64>,
}

fn train_in(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    oracle: Option<&OracleClassifier>,
    dir: &Path,
    opts: TrainOptions,
) -> Result<TrainOutput> {
    let resumable = opts.resume && dir.join(STATE_FILE).exists();
    let mut trainer = if resumable {
        Trainer::resume(ds, cfg.train.clone(), dir)?
    } else {
        Trainer::new(ds, cfg.train.clone())?
    };
    write_atomic(&dir.join(CONFIG_FILE), cfg.emit().as_bytes())?;
    let stop = opts.halt_after.unwrap_or(cfg.train.epochs);
    match oracle {
        Some(o) => {
            let mut ev = OracleEvaluator {
                oracle: o,
                dataset: ds,
                config: cfg.eval,
            };
            trainer.run_until(stop, Some(&mut ev), Some(dir))?;
        }
        None => trainer.run_until(stop, None, Some(dir))?,
    }
    if trainer.epochs_done() == 0 {
        trainer.save(dir)?;
    }
    Ok(TrainOutput {
        run_dir: dir.to_path_buf(),
        epochs_done: trainer.epochs_done(),
        finished: trainer.is_finished(),
        resumed: resumable,
        last_is: trainer.log().last_evaluated().and_then(|r| r.oracle_is),
    })
}

/// Trains the configured strategy and seed into [`run_dir`]. The oracle is
/// used for periodic scores when `train-oracle` has been run.
pub fn train(cfg: &ExperimentConfig, opts: TrainOptions) -> Result<TrainOutput> {
    cfg.validate()?;
    let ds = load_configured_dataset(cfg)?;
    let oracle_path = cfg.output_dir.join(ORACLE_FILE);
    let oracle = if oracle_path.exists() {
        Some(OracleClassifier::load(&oracle_path)?)
    } else {
        None
    };
    train_in(cfg, &ds, oracle.as_ref(), &run_dir(cfg), opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub inception: ISReport,
    pub training: MSSSIMReport,
    pub generated: MSSSIMReport,
    pub dir: PathBuf,
}

/// Scores the generator checkpoint in `checkpoint` (default: the
/// configured run) and writes reports into its `eval/` directory.
pub fn eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalOutput> {
    cfg.validate()?;
    let ds = load_configured_dataset(cfg)?;
    let oracle = load_configured_oracle(cfg)?;
    let run = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| run_dir(cfg));
    let gen_path = run.join(crate::gan::GENERATOR_FILE);
    if !gen_path.exists() {
        return Err(missing(&gen_path, "train a model first"));
    }
    let generator = load_generator(&run)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
    let e = evaluate_generator(&generator, &oracle, &ds, &cfg.eval, &mut rng)?;
    let training = dataset_diversity(&ds, cfg.eval.pairs_per_class, &MsSsimConfig::default(), &mut rng)?;
    let dir = run.join(EVAL_DIR);
    write_atomic(&dir.join("inception.csv"), inception_csv(&e.inception).as_bytes())?;
    write_atomic(&dir.join("diversity.csv"), diversity_csv(&training, &e.generated)?.as_bytes())?;
    write_atomic(&dir.join("diversity.svg"), scatter_svg(&training, &e.generated)?.as_bytes())?;
    let mut summary = format!(
        "inception score {:.4} ± {:.4} ({} samples, {} splits)\n",
        e.inception.score, e.inception.std, e.inception.samples, e.inception.splits
    );
    for w in training.warnings.iter().chain(&e.generated.warnings) {
        let _ = writeln!(summary, "warning: {w}");
    }
    write_atomic(&dir.join("summary.txt"), summary.as_bytes())?;
    Ok(EvalOutput {
        inception: e.inception,
        training,
        generated: e.generated,
        dir,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strategy: Strategy,
    /// Final inception score per seed, in config order.
    pub scores: Vec<f64>,
}

impl SweepRow {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    /// Sample standard deviation across seeds (0 for a single seed).
    pub fn std(&self) -> f64 {
        let n = self.scores.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
    pub dir: PathBuf,
    pub seconds: f64,
}

impl SweepOutput {
    pub fn row(&self, s: Strategy) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.strategy == s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy");
        for seed in &self.seeds {
            let _ = write!(s, ",seed_{seed}");
        }
        s.push_str(",mean,std\n");
        for row in &self.rows {
            s.push_str(row.strategy.name());
            for v in &row.scores {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{}", row.mean(), row.std());
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<14} {:>16}\n", "strategy", "inception score");
        for row in &self.rows {
            let _ = writeln!(
                s,
                "{:<14} {:>16}",
                row.strategy.name(),
                format!("{:.3} ± {:.3}", row.mean(), row.std())
            );
        }
        s
    }
}

/// Trains every (strategy, seed) pair on the same dataset and budget and
/// scores each final generator. Runs are scored once, after their last
/// epoch, and live under `sweep/<strategy>-seed<seed>/`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.sweep_strategies.len() < 2 {
        return Err(Error::Config("a sweep needs at least two strategies".into()));
    }
    if cfg.sweep_seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    let ds = load_configured_dataset(cfg)?;
    let oracle = load_configured_oracle(cfg)?;
    let dir = cfg.output_dir.join(SWEEP_DIR);
    let start = Instant::now();
    let mut timing = String::new();
    let mut rows = Vec::new();
    for &strategy in &cfg.sweep_strategies {
        let mut scores = Vec::new();
        for &seed in &cfg.sweep_seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.train.strategy = strategy;
            run_cfg.train.seed = seed;
            run_cfg.train.eval_every = 0;
            let t = Instant::now();
            let out = train_in(
                &run_cfg,
                &ds,
                Some(&oracle),
                &dir.join(run_name(strategy, seed)),
                TrainOptions::default(),
            )?;
            let score = match out.last_is {
                Some(s) => s,
                None => {
                    let generator = load_generator(&out.run_dir)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
                    evaluate_generator(&generator, &oracle, &ds, &cfg.eval, &mut rng)?
                        .inception
                        .score
                }
            };
            let _ = writeln!(timing, "{},{:.3}", run_name(strategy, seed), t.elapsed().as_secs_f64());
            scores.push(score);
        }
        rows.push(SweepRow { strategy, scores });
    }
    let out = SweepOutput {
        seeds: cfg.sweep_seeds.clone(),
        rows,
        dir: dir.clone(),
        seconds: start.elapsed().as_secs_f64(),
    };
    write_atomic(&dir.join("comparison.csv"), out.to_csv().as_bytes())?;
    write_atomic(&dir.join("comparison.txt"), out.to_table().as_bytes())?;
    // wall-clock figures vary between runs, so they stay out of the CSV
    let _ = writeln!(timing, "total,{:.3}", out.seconds);
    write_atomic(&dir.join("timing.txt"), timing.as_bytes())?;
    Ok(out)
}

/// Collects whatever artifacts exist under the output directory into a
/// markdown report.
pub fn render_report(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let out = &cfg.output_dir;
    let mut s = String::from("# segan report\n\n");
    let d = &cfg.dataset;
    let _ = writeln!(
        s,
        "Dataset: {} classes × {} examples, embedding width {}, prototype overlap {}.\n",
        d.classes, d.per_class, d.embed_dim, d.overlap
    );
    match OracleClassifier::load(&out.join(ORACLE_FILE)) {
        Ok(o) => {
            let _ = writeln!(s, "Oracle held-out accuracy: {:.4}\n", o.accuracy);
        }
        Err(_) => s.push_str("Oracle: not trained.\n\n"),
    }
    if let Ok(table) = fs::read_to_string(out.join(SWEEP_DIR).join("comparison.txt")) {
        let _ = writeln!(s, "## Strategy sweep\n\n```text\n{table}```\n");
    }
    let runs = out.join("runs");
    if let Ok(entries) = fs::read_dir(&runs) {
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        for name in names {
            let run = runs.join(&name);
            let _ = writeln!(s, "## Run `{name}`\n");
            if let Ok(csv) = fs::read_to_string(run.join(METRICS_FILE)) {
                let rows = csv.lines().count().saturating_sub(1);
                let last = csv.lines().last().unwrap_or_default();
                let _ = writeln!(s, "{rows} epochs logged; last row `{last}`.\n");
            }
            if let Ok(summary) = fs::read_to_string(run.join(EVAL_DIR).join("summary.txt")) {
                let _ = writeln!(s, "Evaluation: {}", summary.trim());
                let _ = writeln!(s, "\n![diversity]({name}/{EVAL_DIR}/diversity.svg)\n");
            }
        }
    }
    let path = out.join(REPORT_FILE);
    // image links are relative to the runs directory
    let s = s.replace("](", "](runs/");
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}
