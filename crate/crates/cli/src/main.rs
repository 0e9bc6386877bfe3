//! `hlcnn`: detect sport highlights from audience video.
//!
//! Subcommands wire the library pipeline end to end: `build` turns frames
//! plus an event manifest into a labeled cuboid dataset, `synth` generates
//! the synthetic stand-in dataset, `train` fits the 3D-CNN, `score`
//! produces the highlight-likelihood timeline and ranking for a sequence,
//! and `eval` reports classification metrics.
//!
//! Exit codes: 0 success, 1 runtime/data error, 2 usage error.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hlcnn_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hlcnn", version, about = "Audience-reaction highlight detection")]
struct Cli {
    /// Seed for every randomized stage (init, shuffling, dropout, synthesis).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads for crop scoring and per-sample gradients. Results are
    /// byte-identical for any value; without the `parallel` build feature
    /// execution is sequential regardless.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Numeric precision of tensors and parameters.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    precision: Precision,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy)]
pub struct Dims(pub [usize; 4]);

impl std::str::FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('x').collect();
        if parts.len() != 4 {
            return Err(format!("expected CxHxWxT, got {s:?}"));
        }
        let mut dims = [0usize; 4];
        for (d, p) in dims.iter_mut().zip(&parts) {
            *d = p
                .parse()
                .map_err(|_| format!("bad extent {p:?} in dims {s:?}"))?;
            if *d == 0 {
                return Err(format!("zero extent in dims {s:?}"));
            }
        }
        Ok(Dims(dims))
    }
}

/// Crop-grid geometry shared by `build` and `score`.
#[derive(Args)]
pub struct GridArgs {
    /// Square crop size in pixels.
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Grid stride in pixels.
    #[arg(long, default_value_t = 50)]
    stride: usize,
    /// Cuboid depth in (downsampled) frames.
    #[arg(long, default_value_t = 30)]
    depth: usize,
    /// Frames between consecutive cuboid start times.
    #[arg(long, default_value_t = 30)]
    hop: usize,
    /// Frame rate to downsample to before extraction.
    #[arg(long, default_value_t = 3.0)]
    dst_fps: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Build a labeled cuboid dataset from frames and an event manifest.
    Build {
        /// Directory of .pgm/.ppm frames plus meta.json.
        #[arg(long)]
        frames: PathBuf,
        /// Manifest JSON with fps, roi, and events.
        #[arg(long)]
        manifest: PathBuf,
        /// Output dataset (CUB1).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Seconds after a goal that still count as a highlight.
        #[arg(long, default_value_t = 10.0)]
        positive_window: f64,
        /// Minimum distance in seconds from any event for a clean negative.
        #[arg(long, default_value_t = 30.0)]
        guard: f64,
        /// Skip horizontal-flip augmentation.
        #[arg(long)]
        no_augment: bool,
    },
    /// Generate a synthetic calm/excited dataset.
    Synth {
        #[arg(long, default_value_t = 100)]
        n_pos: usize,
        #[arg(long, default_value_t = 100)]
        n_neg: usize,
        /// Cuboid extents as CxHxWxT.
        #[arg(long, default_value = "1x32x32x10")]
        dims: Dims,
        /// Output dataset (CUB1).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        amp_calm: f64,
        #[arg(long, default_value_t = 0.25)]
        amp_excited: f64,
    },
    /// Train the network on a labeled dataset.
    Train {
        /// Input dataset (CUB1).
        #[arg(long)]
        dataset: PathBuf,
        /// Architecture config JSON; defaults to the full-scale audience
        /// model (3x100x100x30 input).
        #[arg(long)]
        arch: Option<PathBuf>,
        /// Output checkpoint (HNM1); the training history CSV lands beside
        /// it with extension `history.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        /// Override the dropout rate of every dropout layer.
        #[arg(long)]
        dropout: Option<f64>,
        /// Share of each class held out for validation.
        #[arg(long, default_value_t = 0.3)]
        val_fraction: f64,
    },
    /// Score a frame sequence into a highlight-likelihood timeline.
    Score {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output prefix: writes <prefix>_timeline.csv and <prefix>_crops.csv.
        #[arg(long)]
        out_prefix: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Slice length in seconds for aggregation and ranking.
        #[arg(long, default_value_t = 10.0)]
        slice: f64,
        /// How many top slices to print.
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Evaluate a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Metrics JSON output; the ROC CSV lands beside it with extension
        /// `roc.csv` unless --roc-csv is given.
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        roc_csv: Option<PathBuf>,
        /// Decision threshold on the highlight probability.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.precision {
        Precision::F32 => commands::run::<f32>(cli.command, cli.seed, cli.threads),
        Precision::F64 => commands::run::<f64>(cli.command, cli.seed, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
