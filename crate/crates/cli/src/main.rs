use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use hjb_lab_cli::experiments::{run, RunOptions};

/// Numerical laboratory for policy improvement and gradient iteration on a
/// finite-horizon controlled diffusion.
#[derive(Parser)]
#[command(name = "hjblab", version, about)]
struct Args {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory the artifacts are written into (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress lines on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = RunOptions {
        config_path: &args.config,
        out_dir: &args.out,
        seed_override: args.seed,
        quiet: args.quiet,
    };
    match run(&opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
