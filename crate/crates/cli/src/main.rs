mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stgat_core::Error;

/// Skeleton action recognition with spatial-temporal graph attention.
#[derive(Parser, Debug)]
#[command(name = "stgat", version)]
struct Cli {
    /// TOML configuration file; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set window.tau=5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for data synthesis, initialization and shuffling (`train.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs (`output.dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Run directory name under the output root [default: the subcommand].
    #[arg(long, global = true)]
    run: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the configured synthetic train and held-out sets.
    Synth,
    /// Train a model; checkpoints, curves and held-out scores go to the run directory.
    Train,
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Average per-stream softmax score files.
    Fuse {
        /// Score CSVs, one per stream, with identical sample ids.
        #[arg(required = true)]
        scores: Vec<PathBuf>,
        /// `sample_id,label` CSV; enables metrics.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Compare analytic and central-difference gradients of the model.
    Gradcheck {
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 2)]
        batch: usize,
    },
    /// Write the attention maps of one sample as JSON.
    DumpAttn {
        /// Trained weights; freshly initialized weights otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Skeleton file to read instead of the test split.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Print the shape and label of every sequence in a skeleton file.
    InspectData {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Auto)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// By extension: `.skeleton` NTU, `.json` Kinetics, anything else a dataset container.
    Auto,
    Ntu,
    Kinetics,
    Dataset,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Fuse { .. } => "fuse",
            Command::Gradcheck { .. } => "gradcheck",
            Command::DumpAttn { .. } => "dump-attn",
            Command::InspectData { .. } => "inspect-data",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: kind={} code={} {msg}", e.kind(), e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Overrides implied by the global flags, applied after `--set`.
fn flag_overrides(cli: &Cli) -> Result<Vec<String>, Error> {
    let mut out = cli.set.clone();
    if let Some(seed) = cli.seed {
        out.push(format!("train.seed={seed}"));
    }
    if let Some(dir) = &cli.output {
        let dir = dir
            .to_str()
            .ok_or_else(|| Error::config("output.dir", "path is not valid UTF-8"))?;
        out.push(format!(
            "output.dir={}",
            serde_json::to_string(dir).expect("string")
        ));
    }
    Ok(out)
}
