// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lipcert::certify::evaluate_cra;
use lipcert::trainer::config::parse_eps_list;
use lipcert::trainer::{self, load_checkpoint, load_dataset, DatasetKind, TrainConfig};
use lipcert::{verify, Result};

#[derive(Parser)]
#[command(name = "lipcert", version, about = "Train and certify 1-Lipschitz shift-mixing networks")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Mnist,
    Cifar,
}

impl From<Format> for DatasetKind {
    fn from(f: Format) -> Self {
        match f {
            Format::Mnist => DatasetKind::Mnist,
            Format::Cifar => DatasetKind::Cifar,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image file (IDX images or CIFAR binary batch).
    #[arg(long)]
    images: PathBuf,
    /// IDX label file (MNIST only).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mnist")]
    format: Format,
    /// Use only the first N examples.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        /// Flat key = value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Config override, `key=value`; may repeat.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Certified robust accuracy of a checkpoint, as CSV.
    Certify {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated radii, e.g. `0,36/255,0.5`.
        #[arg(long, default_value = "0,36/255,72/255,108/255")]
        eps: String,
        /// Print a text table instead of CSV.
        #[arg(long)]
        table: bool,
    },
    /// Run the built-in oracle checks.
    Verify,
    /// Clean accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        data: DataArgs,
    },
}

fn load_eval(data: &DataArgs) -> Result<(lipcert::model::Model, lipcert::data::Dataset)> {
    let ck = load_checkpoint(&data.checkpoint)?;
    let mut d = load_dataset(data.format.into(), Some(&data.images), data.labels.as_deref())?;
    if let Some(n) = data.limit {
        d = d.take(n);
    }
    Ok((ck.model, d))
}

fn run(cli: Cli) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Train { config, overrides } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            cfg.apply_overrides(&overrides)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.threads = cli.threads;
            trainer::run(&cfg, |line| eprintln!("{line}"))?;
            Ok(true)
        }
        Command::Certify { data, eps, table } => {
            let eps = parse_eps_list(&eps)?;
            let (model, d) = load_eval(&data)?;
            let rep = evaluate_cra(&model, &d, &eps)?;
            print!("{}", if table { rep.to_table() } else { rep.to_csv() });
            Ok(true)
        }
        Command::Verify => {
            let checks = verify::run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Eval { data } => {
            let (model, d) = load_eval(&data)?;
            let acc = trainer::clean_accuracy(&model, &d)?;
            println!("clean_acc,n_examples\n{acc},{}", d.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
