use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prilo_harness::commands;
use prilo_harness::config::{ExperimentConfig, Overrides};
use prilo_harness::error::Result;

#[derive(Parser)]
#[command(name = "prilo", version, about = "Phase retrieval with generative priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML) or a run manifest to replay.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of images.
    #[arg(long)]
    limit: Option<usize>,
    /// Record per-iteration loss/PSNR traces.
    #[arg(long)]
    trace: bool,
    /// Report metrics without trivial-ambiguity registration.
    #[arg(long)]
    no_register: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            limit: self.limit,
            trace: self.trace,
            no_register: self.no_register,
        });
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the VAE and write the decoder weights.
    Train(Common),
    /// Reconstruct a single image.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Dataset index of the image, counted from the configured offset.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run the method over the image set and write CSV, summary and manifest.
    Benchmark(Common),
    /// Print the layer structure of a PRGW weight file.
    InspectWeights { path: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let path = commands::train(&common.load()?)?;
            println!("wrote {}", path.display());
        }
        Command::Solve { common, index } => {
            let out = commands::solve(&common.load()?, index)?;
            for (r, loss) in out.result.restart_losses.iter().enumerate() {
                eprintln!("restart {r}: magnitude loss {loss:.6e}");
            }
            eprintln!("selected restart {}", out.result.restart_index);
            println!("{}", commands::metrics_line(out.image_id, &out.metrics));
            eprintln!("wrote {}", out.image_path.display());
            if let Some(p) = out.trace_path {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Benchmark(common) => {
            let out = commands::benchmark(common.load()?)?;
            let s = &out.summary;
            println!(
                "{} images ({} failed): psnr {:.2} dB [{:.2}, {:.2}], registered psnr {:.2} dB, ssim {:.4}",
                s.images,
                s.failures,
                s.psnr_db.mean,
                s.psnr_db.ci95_low,
                s.psnr_db.ci95_high,
                s.psnr_db_registered.mean,
                s.ssim.mean
            );
            eprintln!("wrote {} and {}", out.csv.display(), out.manifest.display());
        }
        Command::InspectWeights { path } => print!("{}", commands::inspect_weights(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
