//! Command-line interface: training, evaluation, prediction, context
//! sweeps, and gradient checking for the crowd density estimator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctn_core::commands;
use ctn_core::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "ctn", about = "Crowd density estimation with contextual multi-head attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file with one `key = value` per line ('#' comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest: `image-path annotation-path` per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Model checkpoint path (output of train, input of eval/predict).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Architecture variant.
    #[arg(long, value_parser = ["full", "local", "nonlocal", "mha"])]
    variant: Option<String>,
    /// Context half-width m (each projection sees 2m neighbors).
    #[arg(long = "context-m")]
    context_m: Option<usize>,
    /// Attention head count.
    #[arg(long)]
    heads: Option<usize>,
    /// Attention model width d.
    #[arg(long)]
    width: Option<usize>,
    /// Training crop size in pixels (multiple of 8).
    #[arg(long)]
    crop: Option<usize>,
    /// Random crops sampled per training image.
    #[arg(long = "crops-per-image")]
    crops_per_image: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Gaussian width for density targets, in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Tile size for tiled inference (multiple of 8).
    #[arg(long)]
    tile: Option<usize>,
    /// RNG seed; fixed seeds give byte-identical outputs.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight initialization: `he` or `gauss:<std>`.
    #[arg(long)]
    init: Option<String>,
}

impl CommonArgs {
    fn resolve(&self) -> ctn_core::Result<RunConfig> {
        let overrides = Overrides {
            manifest: self.manifest.clone(),
            checkpoint: self.checkpoint.clone(),
            out: self.out.clone(),
            variant: self.variant.clone(),
            context_m: self.context_m,
            heads: self.heads,
            width: self.width,
            crop: self.crop,
            crops_per_image: self.crops_per_image,
            batch: self.batch,
            epochs: self.epochs,
            lr: self.lr,
            sigma: self.sigma,
            tile: self.tile,
            seed: self.seed,
            init: self.init.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a per-iteration loss CSV.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Stop after this many optimizer steps regardless of epochs.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a checkpoint over a manifest (MAE/RMSE, tiled inference).
    Eval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Predict a density map for one image; writes DMAP + PGM heatmap.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Input image (binary PPM P6 or PGM P5).
        image: PathBuf,
    },
    /// Train and evaluate one model per context value.
    SweepContext {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated context half-widths m.
        #[arg(long = "m-list", value_delimiter = ',', default_value = "0,1,2,3,5")]
        m_list: Vec<usize>,
    },
    /// Finite-difference checks of every autodiff primitive and the
    /// end-to-end network.
    Gradcheck {
        /// Number of random seeds per check.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Deliberately corrupt one check's analytic gradient (harness
        /// self-test; the run must then fail).
        #[arg(long)]
        corrupt: Option<String>,
    },
}

fn run() -> ctn_core::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, iterations } => {
            let cfg = common.resolve()?;
            let outcome = commands::cmd_train(&cfg, iterations)?;
            println!(
                "trained {} iterations: loss {:.6e} -> {:.6e}",
                outcome.iterations, outcome.first_loss, outcome.final_loss
            );
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!("loss log:   {}", outcome.loss_csv.display());
        }
        Command::Eval { common } => {
            let cfg = common.resolve()?;
            let outcome = commands::cmd_eval(&cfg)?;
            print!("{}", outcome.table);
            println!("metrics csv: {}", outcome.csv_path.display());
        }
        Command::Predict { common, image } => {
            let cfg = common.resolve()?;
            let outcome = commands::cmd_predict(&cfg, &image)?;
            println!("count: {}", outcome.count);
            println!("density: {}", outcome.dmap_path.display());
            println!("heatmap: {}", outcome.heatmap_path.display());
        }
        Command::SweepContext { common, m_list } => {
            let cfg = common.resolve()?;
            let rows = commands::cmd_sweep_context(&cfg, &m_list)?;
            print!("{}", commands::sweep_table(&rows));
        }
        Command::Gradcheck { seeds, corrupt } => {
            let outcomes = commands::cmd_gradcheck(seeds, corrupt.as_deref())?;
            print!("{}", commands::gradcheck_report(&outcomes));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
