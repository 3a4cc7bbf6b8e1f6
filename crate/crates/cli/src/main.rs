use std::path::PathBuf;

use clap::{Parser, Subcommand};
use labelwrap::Pose;
use labelwrap_cli::augment::run_augment;
use labelwrap_cli::commands::{run_detect, run_frontview, run_rank, run_synth};
use labelwrap_cli::config::{parse_pose, parse_size, AugmentConfig, CliError};

#[derive(Parser)]
#[command(
    name = "labelwrap",
    version,
    about = "Synthesize views of cylindrical bottle labels from one photo, \
             build augmented datasets, and rank label embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect the label region and print its 2D description
    Detect {
        image: PathBuf,
        /// Write stage images (edge mask, chains, fitted region) to --out
        #[arg(long)]
        debug: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Synthesize one view of a detected label at a pose
    Synth {
        image: PathBuf,
        /// Target pose "rx,rz,tx,ty,tz" (degrees, degrees, mm, mm, mm)
        #[arg(long, value_parser = parse_pose)]
        pose: Pose,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Directory of background images (black background when absent)
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        /// Seed for the background choice
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the synthesis mask
        #[arg(long)]
        debug: bool,
    },
    /// Generate an augmented dataset from a directory of label photos
    Augment {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "augmented")]
        out: PathBuf,
        /// Override the config's master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override outputs per input image
        #[arg(long)]
        count: Option<u32>,
        /// Override output size, e.g. 224x224
        #[arg(long, value_parser = parse_size)]
        size: Option<[u32; 2]>,
        /// Override the background directory
        #[arg(long)]
        backgrounds: Option<PathBuf>,
    },
    /// Normalize a photo to the canonical front view
    Frontview {
        image: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Rank gallery embeddings by cosine similarity to query embeddings
    Rank {
        query: PathBuf,
        gallery: PathBuf,
        /// Entries to print per query
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect { image, debug, out } => {
            print!("{}", run_detect(&image, debug, &out)?);
        }
        Command::Synth { image, pose, config, out, backgrounds, seed, debug } => {
            let cfg = AugmentConfig::load(config.as_deref())?;
            let path = run_synth(&image, &pose, &cfg, &out, backgrounds.as_deref(), seed, debug)?;
            println!("{}", path.display());
        }
        Command::Augment { input, config, out, seed, count, size, backgrounds } => {
            let mut cfg = AugmentConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(c) = count {
                cfg.count = c;
            }
            if let Some(s) = size {
                cfg.output_size = s;
            }
            if let Some(b) = backgrounds {
                cfg.backgrounds = Some(b);
            }
            let report = run_augment(&input, &out, &cfg)?;
            println!(
                "{} outputs from {} inputs ({} skipped); manifest {}",
                report.outputs,
                report.inputs,
                report.failed_inputs.len(),
                report.manifest.display()
            );
        }
        Command::Frontview { image, config, out } => {
            let cfg = AugmentConfig::load(config.as_deref())?;
            let path = run_frontview(&image, &cfg, &out)?;
            println!("{}", path.display());
        }
        Command::Rank { query, gallery, k } => {
            print!("{}", run_rank(&query, &gallery, k)?);
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code =
                if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                    0
                } else {
                    1
                };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
