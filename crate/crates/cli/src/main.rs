use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use cheese::{load_config, pipeline, RunConfig};

/// Weakly supervised cheating detection: synthetic data, feature fusion,
/// pseudo-label generation, encoder training and evaluation.
#[derive(Parser, Debug)]
#[command(name = "cheese", version)]
struct Cli {
    /// JSON run configuration; absent keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Merge an OpenFace CSV with per-clip body features into fused rows.
    Fuse {
        /// OpenFace frame export.
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Headerless CSV of 128-d body features, one row per clip.
        #[arg(long, value_name = "CSV")]
        body: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Train the stage I generator and write clip pseudo-labels.
    GenLabels {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the stage II encoder against pseudo-labels.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score the test split and report frame-level AUC.
    Eval {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        /// Directory for per-video score curves (default: `scores/` next to the report).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run every finite-difference gradient suite.
    Gradcheck,
}

#[derive(Args, Debug)]
struct DataArg {
    /// Dataset manifest.
    #[arg(long = "data", value_name = "MANIFEST")]
    manifest: PathBuf,
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    log::info!("seed {}", cfg.seed);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Synth { out } => {
            let manifest = pipeline::synth(&pipeline::synth_config(&cfg), out)?;
            println!("{}", manifest.display());
        }
        Command::Fuse { data, body, out } => {
            let n = cheese::fusion::fuse_files(data, body, cfg.clip_len_frames, out)?;
            println!("{n} clips -> {}", out.display());
        }
        Command::GenLabels { data, out } => {
            let res = pipeline::gen_labels(&cfg, &data.manifest, out)?;
            println!("{}", out.join(pipeline::LABELS_FILE).display());
            log::info!(
                "stage I final loss {:.6}",
                res.trace.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Train { data, labels, out } => {
            let trace = pipeline::train(&cfg, &data.manifest, labels, out)?;
            println!("{}", out.join(pipeline::ENCODER_FILE).display());
            log::info!("stage II final loss {:.6}", trace.last().copied().unwrap_or(f64::NAN));
        }
        Command::Eval {
            data,
            model,
            report,
            out,
        } => {
            let scores = match out {
                Some(d) => d.clone(),
                None => report.parent().unwrap_or(Path::new(".")).join(pipeline::SCORES_DIR),
            };
            let m = pipeline::eval(&data.manifest, model, report, &scores)?;
            println!("auc {:.6}", m.auc);
        }
        Command::Gradcheck => {
            let outcomes = pipeline::gradcheck()?;
            let mut failed = 0;
            for o in &outcomes {
                println!(
                    "{} seed {:>2}: max rel error {:.3e}, {} checked, {} at kinks: {}",
                    o.suite.name(),
                    o.seed,
                    o.max_rel_error,
                    o.checked,
                    o.skipped,
                    if o.accepted { "ok" } else { "FAILED" }
                );
                failed += usize::from(!o.accepted);
            }
            if failed > 0 {
                bail!("{failed} of {} gradient checks failed", outcomes.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHEESE_LOG", "info")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already carry their cause in the message
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
