use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use dmcd::engine::{run_with_progress, EngineConfig};
use dmcd::io::{
    load_config_file, load_mask, load_pair, set_config_value, write_outputs, Normalization, RasterSpec, RunReport,
};
use dmcd::networks::WeightArchive;
use dmcd::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Term {
    Img,
    Feat,
    Ctx,
    Sparse,
}

/// Unsupervised change detection on a co-registered image pair.
#[derive(Debug, Parser)]
#[command(name = "dmcd", version)]
struct Args {
    /// Pre-change raster (PNG, or raw f32le with a .hdr sidecar).
    #[arg(long)]
    pre: PathBuf,
    /// Post-change raster.
    #[arg(long)]
    post: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Reference change mask; enables metrics and confusion.png.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// File of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Bands forming the 3-channel extractor view, as i,j,k.
    #[arg(long)]
    bands: Option<String>,
    /// Feature-extractor weight archive.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long = "disable-loss", value_enum)]
    disable_loss: Vec<Term>,
    #[arg(long)]
    freeze_dfe: bool,
    /// Input normalization: auto, minmax, or a divisor such as 255.
    #[arg(long, default_value = "auto")]
    normalize: String,
    /// Suppress per-iteration progress.
    #[arg(long, short)]
    quiet: bool,
}

fn build_config(args: &Args) -> dmcd::Result<EngineConfig> {
    let mut config = EngineConfig::default();
    if let Some(path) = &args.config {
        load_config_file(path, &mut config)?;
    }
    let flags = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("iterations", args.iterations.map(|v| v.to_string())),
        ("threshold", args.threshold.map(|v| v.to_string())),
        ("learningRate", args.lr.map(|v| v.to_string())),
        ("bands", args.bands.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            set_config_value(&mut config, key, &v)?;
        }
    }
    for term in &args.disable_loss {
        let w = &mut config.loss_weights;
        match term {
            Term::Img => w.enable_img = false,
            Term::Feat => w.enable_feat = false,
            Term::Ctx => w.enable_ctx = false,
            Term::Sparse => w.enable_sparse = false,
        }
    }
    if args.freeze_dfe {
        config.dfe_trainable = false;
    }
    config.validate()?;
    Ok(config)
}

fn normalization(value: &str) -> dmcd::Result<Option<Normalization>> {
    match value {
        "auto" => Ok(None),
        "minmax" => Ok(Some(Normalization::MinMax)),
        v => match v.parse::<f64>() {
            Ok(d) if d > 0.0 && d.is_finite() => Ok(Some(Normalization::Divisor(d))),
            _ => Err(Error::Config(format!(
                "--normalize expects auto, minmax or a positive divisor, got {v:?}"
            ))),
        },
    }
}

fn execute(args: &Args) -> dmcd::Result<()> {
    let config = build_config(args)?;
    let norm = normalization(&args.normalize)?;
    let spec = |path: &PathBuf| RasterSpec {
        path: path.clone(),
        normalization: norm,
    };
    let (pre, post) = load_pair(&spec(&args.pre), &spec(&args.post))?;
    let mut checksums = vec![("pre".to_string(), pre.checksum.clone()), ("post".to_string(), post.checksum.clone())];
    let reference = match &args.reference {
        Some(path) => {
            let (h, w, mask) = load_mask(path)?;
            if (h, w) != (pre.image.height(), pre.image.width()) {
                return Err(Error::Registration {
                    pre: pre.image.describe(),
                    post: format!("reference {h} x {w}"),
                });
            }
            let bytes = std::fs::read(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            checksums.push(("ref".to_string(), sha256(&bytes)));
            Some(mask)
        }
        None => None,
    };
    let archive = match &args.weights {
        Some(path) => Some(WeightArchive::read_file(path)?),
        None => None,
    };
    let quiet = args.quiet;
    let result = run_with_progress(&pre.image, &post.image, &config, archive.as_ref(), |t, b| {
        if !quiet && (t % 10 == 0 || t == config.iterations) {
            eprintln!("iteration {t:>4}/{}: {b}", config.iterations);
        }
    })?;
    let report = RunReport::from_run(&config, &result, reference.as_deref(), checksums)?;
    let files = write_outputs(&args.out, &result, reference.as_deref(), &report)?;
    if !quiet {
        if let Some(auc) = report.metrics.as_ref().and_then(|m| m.auc) {
            eprintln!("AUC {auc:.4}");
        }
        eprintln!("wrote {} in {:.1} s", files.probability.parent().unwrap_or(&args.out).display(), result.seconds);
    }
    Ok(())
}

fn sha256(bytes: &[u8]) -> String {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dmcd: {e}");
            match e {
                Error::NonFiniteLoss { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
