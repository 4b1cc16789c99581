use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use shtseg_cli::{run_pipeline, ConfigFile, Overrides};

/// Decompose and segment a grayscale image.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// PGM or PNG input; overrides `input`/`synthetic` in the config
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Built-in test image: two-plateau, squares-stripes, star-field, illumination-ramp
    #[arg(long)]
    synthetic: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Iteration count (outer count `t1` for bilevel)
    #[arg(long)]
    iters: Option<usize>,
}

fn run(args: Args) -> anyhow::Result<()> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let file = ConfigFile::load(&args.config)?;
    let cfg = file.resolve(&Overrides {
        input: args.input,
        synthetic: args.synthetic,
        out: args.out,
        seed: args.seed,
        iters: args.iters,
    })?;
    let (comps, manifest) = run_pipeline(&cfg)?;
    println!(
        "{}: {} iterations, mse {}, written to {}",
        comps.pipeline,
        comps.iterations,
        manifest.get("mse").unwrap_or("?"),
        cfg.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
