use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use segan::experiment::{self, ExperimentConfig, TrainOptions, KEYS};
use segan::{Error, Result};

const OUTPUT_ENV: &str = "SEGAN_OUTPUT_DIR";

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn command() -> Command {
    let mut cmd = Command::new("segan")
        .about("Text-conditioned GAN lab: synthetic data, negative sampling, training and scoring")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Experiment config file (key = value); flags override it"),
        );
    for key in KEYS {
        let mut arg = Arg::new(*key)
            .long(flag(key))
            .global(true)
            .value_name("VALUE")
            .help_heading("Experiment keys");
        if *key == "output_dir" {
            arg = arg.env(OUTPUT_ENV).help("Root for every artifact");
        }
        cmd = cmd.arg(arg);
    }
    cmd.subcommand(Command::new("gen-data").about("Generate the synthetic dataset and a contact sheet"))
        .subcommand(Command::new("train-oracle").about("Train the classifier used for inception scores"))
        .subcommand(
            Command::new("train")
                .about("Train one strategy and seed")
                .arg(
                    Arg::new("resume")
                        .long("resume")
                        .action(ArgAction::SetTrue)
                        .help("Continue from the run's checkpoint when one exists"),
                )
                .arg(
                    Arg::new("halt-after")
                        .long("halt-after")
                        .value_name("EPOCHS")
                        .value_parser(clap::value_parser!(usize))
                        .help("Stop once this many epochs are done"),
                ),
        )
        .subcommand(
            Command::new("eval").about("Score a trained generator").arg(
                Arg::new("checkpoint")
                    .long("checkpoint")
                    .value_name("DIR")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("Run directory to score (default: the configured run)"),
            ),
        )
        .subcommand(Command::new("sweep").about("Compare strategies over several seeds"))
        .subcommand(Command::new("render-report").about("Summarize artifacts into report.md"))
        .subcommand(Command::new("print-config").about("Print the effective configuration"))
}

fn resolve(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)
                .map_err(|e| Error::Config(format!("--{}: {e}", flag(key))))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("a subcommand is required");
    let cfg = resolve(sub)?;
    match name {
        "gen-data" => {
            let out = experiment::gen_data(&cfg)?;
            println!(
                "wrote {} examples to {} (crc32 {:08x})",
                out.examples,
                out.dataset.display(),
                out.crc
            );
            println!("contact sheet {}", out.contact_sheet.display());
        }
        "train-oracle" => {
            let oracle = experiment::train_oracle(&cfg)?;
            println!("oracle held-out accuracy {:.4}", oracle.accuracy);
        }
        "train" => {
            let opts = TrainOptions {
                resume: sub.get_flag("resume"),
                halt_after: sub.get_one::<usize>("halt-after").copied(),
            };
            let out = experiment::train(&cfg, opts)?;
            let state = if out.finished { "finished" } else { "halted" };
            println!(
                "{state} after {} epochs in {}{}",
                out.epochs_done,
                out.run_dir.display(),
                if out.resumed { " (resumed)" } else { "" }
            );
            if let Some(is) = out.last_is {
                println!("last inception score {is:.4}");
            }
        }
        "eval" => {
            let out = experiment::eval(&cfg, sub.get_one::<PathBuf>("checkpoint").map(PathBuf::as_path))?;
            println!(
                "inception score {:.4} ± {:.4}",
                out.inception.score, out.inception.std
            );
            println!("reports in {}", out.dir.display());
        }
        "sweep" => {
            let out = experiment::sweep(&cfg)?;
            print!("{}", out.to_table());
            println!("{:.1}s total; results in {}", out.seconds, out.dir.display());
        }
        "render-report" => {
            println!("{}", experiment::render_report(&cfg)?.display());
        }
        "print-config" => print!("{}", cfg.emit()),
        other => unreachable!("unhandled subcommand {other}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        command().debug_assert();
    }

    #[test]
    fn every_key_has_a_flag() {
        let cmd = command();
        for key in KEYS {
            let long = flag(key);
            assert!(cmd.get_arguments().any(|a| a.get_long() == Some(long.as_str())), "{key}");
        }
    }
}
