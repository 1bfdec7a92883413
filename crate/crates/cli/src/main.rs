use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esvit_cli::config::CONFIG_ENV;
use esvit_cli::training::EvalSplit;
use esvit_cli::{pipeline, tools, training, CliError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "esvit", version, about = "ECG emotion recognition pipeline")]
struct Cli {
    /// Run config JSON; defaults are used when neither this nor the
    /// environment variable is set.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic ECG corpus with its manifest.
    Synth {
        /// Corpus spec JSON; the built-in two-class spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Baseline removal, band-pass, R-peaks and segmentation.
    Preprocess {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn preprocessed segments into PNG images with a manifest.
    Encode {
        preprocessed: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on an image manifest.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on an image manifest.
    Eval {
        checkpoint: PathBuf,
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalSplit::All)]
        split: EvalSplit,
    },
    /// Finite-difference checks of every primitive and the tiny model.
    Gradcheck,
    /// Print shapes and statistics of an artifact.
    Inspect {
        path: PathBuf,
        /// Sampling rate for raw signal files.
        #[arg(long, default_value_t = 128.0)]
        fs: f64,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    RunConfig::load(path)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Synth { spec, out } => {
            let corpus = tools::run_synth(spec.as_deref(), out)?;
            say(format!(
                "wrote {} recordings to {}",
                corpus.rows.len(),
                out.display()
            ));
        }
        Command::Preprocess { manifest, out } => {
            let cfg = load_config(cli.config.as_deref())?;
            let r = pipeline::run_preprocess(manifest, &cfg, out)?;
            say(format!(
                "{} recordings, {} segments, {} skipped peaks -> {}",
                r.recordings.len(),
                r.segments.len(),
                r.skipped.len(),
                r.dir.display()
            ));
        }
        Command::Encode { preprocessed, out } => {
            let cfg = load_config(cli.config.as_deref())?;
            let r = pipeline::run_encode(preprocessed, &cfg, out)?;
            say(format!("{} images -> {}", r.rows.len(), r.dir.display()));
        }
        Command::Train { manifest, out } => {
            let cfg = load_config(cli.config.as_deref())?;
            let r = training::run_train(manifest, &cfg, out)?;
            let last = r.outcome.evaluations.last().expect("at least one epoch");
            say(format!(
                "{} epochs, train accuracy {:.4}{} -> {}",
                r.outcome.evaluations.len(),
                last.train.accuracy,
                last.test
                    .as_ref()
                    .map(|t| format!(", test accuracy {:.4}", t.accuracy))
                    .unwrap_or_default(),
                r.dir.display()
            ));
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
            split,
        } => {
            let r = training::run_eval(checkpoint, manifest, *split, out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&r.report).expect("report serialises")
            );
        }
        Command::Gradcheck => {
            let seed = load_config(cli.config.as_deref())?.seed;
            let summary = tools::run_gradcheck(seed)?;
            print!("{}", summary.render());
            if !summary.passed() {
                return Err(CliError::Invariant("gradient check failed".into()));
            }
        }
        Command::Inspect { path, fs } => print!("{}", tools::inspect(path, *fs)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
