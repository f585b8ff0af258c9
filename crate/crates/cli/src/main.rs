//! `surfi`: detect looped camera feeds by checking video motion against Wi-Fi CSI.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use surfi_core::trace::CsiFormat;

use commands::{Format, Global, Outcome};
use error::CliError;

#[derive(Parser)]
#[command(name = "surfi", version, about = "Camera-looping detection from keypoint and Wi-Fi CSI traces")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for corpus synthesis and sequence sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (detect, calibrate) or directory (synth, eval).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse one video/CSI pair. Exit 0 = legitimate, 2 = looped, 1 = error.
    Detect {
        video: PathBuf,
        csi: PathBuf,
        /// Override the CSI format inferred from the file extension.
        #[arg(long, value_parser = parse_csi_format)]
        csi_format: Option<CsiFormat>,
    },
    /// Write a synthetic corpus (traces, manifest.jsonl, corpus.json) into --out.
    Synth {
        /// Corpus protocol (JSON); defaults to the built-in protocol.
        #[arg(long)]
        protocol: Option<PathBuf>,
    },
    /// Calibrate decision thresholds per event count on a corpus's legitimate trials.
    Calibrate {
        corpus: PathBuf,
        #[arg(long)]
        target_fpr: Option<f64>,
    },
    /// Evaluate detection rates on a corpus; CSV plot data goes to --out.
    Eval {
        corpus: PathBuf,
        /// Sequences sampled per event count above one.
        #[arg(long, default_value_t = 2000)]
        sequences: usize,
    },
}

fn parse_csi_format(s: &str) -> Result<CsiFormat, String> {
    s.parse::<CsiFormat>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let g = Global { config: cli.config, seed: cli.seed, out: cli.out, format: cli.format };
    let (outcome, to_file) = match &cli.command {
        Command::Detect { video, csi, csi_format } => (commands::cmd_detect(&g, video, csi, *csi_format)?, true),
        Command::Synth { protocol } => (commands::cmd_synth(&g, protocol.as_deref())?, false),
        Command::Calibrate { corpus, target_fpr } => (commands::cmd_calibrate(&g, corpus, *target_fpr)?, true),
        Command::Eval { corpus, sequences } => (commands::cmd_eval(&g, corpus, *sequences)?, false),
    };
    match (&g.out, to_file) {
        (Some(path), true) => {
            std::fs::write(path, &outcome.output).map_err(CliError::write(path))?;
            Ok(Outcome { output: String::new(), ..outcome })
        }
        _ => Ok(outcome),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SURFI_LOG", "warn")).init();
    // clap exits with 2 on bad arguments, which would read as "looped".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            println!("{}", CliError::Usage(e.kind().to_string()).to_json());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.output);
            ExitCode::from(outcome.exit as u8)
        }
        Err(e) => {
            log::error!("{e}");
            println!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
