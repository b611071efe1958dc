//! Experiment runner: configuration files and the commands behind the
//! `segan` binary. Every artifact lands under the configured output
//! directory:
//!
//! ```text
//! dataset.sgds  contact_sheet.png  oracle.sgoc  report.md
//! runs/<strategy>-seed<seed>/   checkpoints, metrics.csv, config.txt, eval/
//! sweep/                        comparison.csv, comparison.txt, timing.txt, runs
//! ```

mod commands;
mod config;

pub use commands::{
    contact_sheet, eval, exit_code, gen_data, load_configured_dataset, load_configured_oracle,
    render_report, run_dir, run_name, sweep, train, train_oracle, EvalOutput, GenDataOutput,
    SweepOutput, SweepRow, TrainOptions, TrainOutput, CONFIG_FILE, CONTACT_SHEET_FILE,
    DATASET_FILE, EVAL_DIR, ORACLE_FILE, REPORT_FILE, SWEEP_DIR,
};
pub use config::{ExperimentConfig, KEYS, SCHEMA_VERSION};

#[cfg(test)]
mod tests;
