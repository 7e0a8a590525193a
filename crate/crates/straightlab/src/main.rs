use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use straightlab::cli;

/// Batch experiments for learning visual representations by temporal
/// straightening: dataset generation, training, probing, geometry, and
/// robustness sweeps.
#[derive(Parser)]
#[command(name = "straightlab", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (also via STRAIGHTLAB_WORKERS; default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence dataset from a config file.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a network on a dataset and checkpoint it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset file (default: <out>/dataset.strq).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Layerwise straightness curve for a checkpoint on a dataset.
    Straightness {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decoding and next-frame prediction reports for one attribute.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// identity | x | y | scale | angle
        #[arg(long)]
        attribute: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pairing histograms and participation ratios.
    Geometry {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Noise or PGD robustness sweep.
    Robust {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// noise | pgd
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the pixel decoder on frozen embeddings.
    TrainDecoder {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Input / reconstruction / prediction image grid for one sample.
    DecodeStrip {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        sample_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired metric deltas between two run directories.
    Compare {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            // help/version are not usage errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let workers = args.workers.or_else(|| {
        std::env::var("STRAIGHTLAB_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set worker count: {e}");
        }
    }

    let result = match &args.command {
        Command::Gen { config, out, seed } => cli::cmd_gen(config, out, *seed),
        Command::Train {
            config,
            out,
            dataset,
            seed,
        } => cli::cmd_train(config, out, dataset.as_deref(), *seed),
        Command::Straightness {
            checkpoint,
            dataset,
            out,
        } => cli::cmd_straightness(checkpoint, dataset, out),
        Command::Probe {
            checkpoint,
            dataset,
            attribute,
            out,
            config,
            seed,
        } => cli::cmd_probe(checkpoint, dataset, attribute, out, config.as_deref(), *seed),
        Command::Geometry {
            checkpoint,
            dataset,
            out,
            config,
            seed,
        } => cli::cmd_geometry(checkpoint, dataset, out, config.as_deref(), *seed),
        Command::Robust {
            checkpoint,
            dataset,
            kind,
            out,
            config,
            seed,
        } => cli::cmd_robust(checkpoint, dataset, kind, out, config.as_deref(), *seed),
        Command::TrainDecoder {
            checkpoint,
            dataset,
            out,
            config,
            seed,
        } => cli::cmd_train_decoder(checkpoint, dataset, out, config.as_deref(), *seed),
        Command::DecodeStrip {
            checkpoint,
            decoder,
            dataset,
            sample_index,
            out,
        } => cli::cmd_decode_strip(checkpoint, decoder, dataset, *sample_index, out),
        Command::Compare { run_a, run_b, out } => cli::cmd_compare(run_a, run_b, out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
