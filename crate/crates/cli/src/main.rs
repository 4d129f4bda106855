//! `nispa`: run experiments, skewness and ablation analyses, and re-emit
//! saved reports.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "nispa", version, about = "Sparse continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every verb that builds an experiment.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML experiment file. Keys missing from the file take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base settings when no file is given.
    #[arg(long, value_enum, default_value_t = Preset::Desk, conflicts_with = "config")]
    pub preset: Preset,
    /// First seed. Overrides the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory. Overrides the file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key=value` override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Reference hyperparameters (wide layers, large batches).
    Reference,
    /// Small network that finishes in seconds.
    Desk,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment and write report.json / report.csv.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Train a single-head model on all classes and record the skewness of
    /// unit activations after each epoch.
    AnalyzeSkewness {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
    },
    /// Accuracy after silencing the k most active or k random units per
    /// hidden layer.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Units removed per layer. Defaults to ten even steps up to the
        /// narrowest hidden layer.
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Random draws per k.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Print the summary of a saved report.json and optionally re-emit it.
    Report {
        /// Path to report.json.
        input: PathBuf,
        /// Keep only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the (filtered) report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { common, format } => commands::run(&common, format),
        Command::AnalyzeSkewness { common, epochs } => commands::analyze_skewness(&common, epochs),
        Command::Ablate {
            common,
            epochs,
            ks,
            repeats,
        } => commands::ablate(&common, epochs, &ks, repeats),
        Command::Report {
            input,
            seed,
            out,
            format,
        } => commands::report(&input, seed, out.as_deref(), format),
    };
    match outcome {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_and_preset_conflict() {
        assert!(Cli::try_parse_from(["nispa", "run", "--config", "a.toml", "--preset", "reference"]).is_err());
    }
}
