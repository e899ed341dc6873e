//! Command-line front end. Diagnostics go to stderr as `error[<kind>]: <message>`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result, EXIT_USAGE};
use crate::run::{self, Split};

#[derive(Debug, Parser)]
#[command(name = "pseudoheat", version, about = "Pseudo-heatmap ensembling experiments on synthetic poses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo of the pseudo-label pipeline with simulated students.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dual students in every configured mode.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score PHM1 predictions against a dataset index.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// PCK thresholds, relative to the longer bbox side. Repeatable.
        #[arg(long = "alpha", default_values_t = [0.1])]
        alphas: Vec<f64>,
    },
    /// Draw a PHM1 heatmap file as SVG.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pixels per heatmap cell.
        #[arg(long, default_value_t = 4)]
        scale: usize,
    },
    /// Write a split of the configured benchmark as PHM1 files plus index.json.
    Export {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => parse_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let workers = run::worker_count()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load(&config)?;
            let report = run::run_simulate(&cfg, &out)?;
            for s in &report.selection {
                println!(
                    "{}: self {:.3}, picked lower-error label {:.3}",
                    s.aggregate.name(),
                    s.self_rate,
                    s.better_rate
                );
            }
            Ok(())
        }
        Command::Train { config, out } => {
            let cfg = load(&config)?;
            let report = run::run_train(&cfg, &out)?;
            for m in &report.modes {
                println!("{:<18} PCK {:.4}  AP {:.4}", run::mode_name(m.mode), m.mean_pck, m.mean_ap);
            }
            Ok(())
        }
        Command::Eval { pred, gt, out, alphas } => {
            let report = run::run_eval(&pred, &gt, &alphas, Some(&out))?;
            println!("AP {:.4}", report.ap);
            for (a, v) in &report.pck_at {
                println!("PCK@{a} {v:.4}");
            }
            Ok(())
        }
        Command::Render { input, out, scale } => run::run_render(&input, &out, scale),
        Command::Export { config, out, split } => {
            let cfg = load(&config)?;
            let index = run::run_export(&cfg, &out, split)?;
            println!("{} scenes", index.scenes.len());
            Ok(())
        }
        Command::Config { config } => {
            print!("{}", load(&config)?.to_toml()?);
            Ok(())
        }
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("error[usage]: {}", e.to_string().trim_end());
            return EXIT_USAGE;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}
