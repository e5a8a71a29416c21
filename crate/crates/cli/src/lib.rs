//! `lsp-lab`: runs latent-space-projection experiments from a flat config
//! file and writes human-readable and structured reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod record;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use commands::{cmd_bench, cmd_compare, cmd_eval, cmd_train};
pub use config::{Method, RunConfig};
pub use error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Train,
    Eval,
    Compare,
    Bench,
}

#[derive(Debug, Parser)]
#[command(name = "lsp-lab", version, about = "Latent space projection experiment runner")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Model file for eval and bench; defaults to `<out>/model.lspm`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one subcommand and returns a one-paragraph summary for stdout.
pub fn run(args: &Args) -> Result<String, CliError> {
    let config = RunConfig::load(&args.config)?;
    let out = args.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let model = args.model.as_deref();
    Ok(match args.command {
        Command::Train => {
            let o = cmd_train(&config, &out)?;
            let last = o.history.last().map_or(f64::NAN, |h| h.recon_loss);
            format!(
                "trained {} epochs, final recon_loss {last:.6}\nmodel: {}\nhistory: {}",
                o.history.len(),
                o.model_path.display(),
                o.history_path.display()
            )
        }
        Command::Eval => {
            let o = cmd_eval(&config, model, &out)?;
            format!(
                "{}: accuracy {:.4}, privacy protection {:.4}\nreport: {}",
                config.method,
                o.report.utility.accuracy,
                o.report.privacy_protection,
                o.text_path.display()
            )
        }
        Command::Compare => {
            let o = cmd_compare(&config, &out)?;
            format!("{}\ntable: {}", o.table.trim_end(), o.text_path.display())
        }
        Command::Bench => {
            let o = cmd_bench(&config, model, &out)?;
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            format!("latency table: {}", o.text_path.display())
        }
    })
}
