use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dmcd::io::{write_image_png, write_mask_png};
use dmcd::synthetic::{generate, SyntheticConfig};

/// Writes a synthetic pre/post pair with a known change square.
#[derive(Debug, Parser)]
#[command(name = "dmcd-synth", version)]
struct Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SyntheticConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 24)]
    square: usize,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
}

fn execute(args: &Args) -> dmcd::Result<()> {
    let pair = generate(&SyntheticConfig {
        size: args.size,
        square: args.square,
        noise_sigma: args.noise,
        seed: args.seed,
        ..SyntheticConfig::default()
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| dmcd::Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    write_image_png(&args.out.join("pre.png"), &pair.pre)?;
    write_image_png(&args.out.join("post.png"), &pair.post)?;
    write_mask_png(&args.out.join("reference.png"), &pair.reference, args.size, args.size)
}

fn main() -> ExitCode {
    match execute(&Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dmcd-synth: {e}");
            ExitCode::from(2)
        }
    }
}
