//! `caustica`: configuration-driven front end for ray tracing, caustic scans,
//! singularity classification, canonical relation verification and order
//! arithmetic.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::SchemaError;
use output::CheckFailure;

#[derive(Parser)]
#[command(name = "caustica", version, about = "Fold caustics, folded cross caps and FIO orders")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for every random sample (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary tolerance of the command.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Directory for CSV and JSON outputs (default `caustica-out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace rays and write their phase-space states as CSV.
    Trace,
    /// Fold caustic scan with per-fold spreading oracle.
    Caustics,
    /// Build the marine relation for a lens and verify the folded cross cap.
    MarineCheck,
    /// Classify a map at a point.
    Classify {
        /// `normal-form:NAME`, `conjugate:NAME` or `poly:COMP;COMP;…` in x1, x2, ….
        #[arg(long)]
        map: String,
        /// Comma-separated point (default: origin).
        #[arg(long)]
        at: Option<String>,
        /// Exit 1 unless the verdict has this name.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Full verification of the model relation.
    ModelVerify {
        #[arg(long)]
        n: Option<usize>,
        /// `hyperbolic` or `elliptic`.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Verify a family of weak-normal-form relations.
    ComposeVerify,
    /// Orders of the normal operator with the derivation trace.
    Orders {
        /// Operator order, e.g. `3/4`.
        #[arg(long, allow_hyphen_values = true)]
        mu: String,
        /// `fcc` or `single-source`.
        #[arg(long, default_value = "fcc")]
        mode: String,
        /// Dimension used for the symbol-valued cross check.
        #[arg(long, default_value_t = 3)]
        n: i64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config::load(cli.config.as_deref())?;
    cfg.seed = cli.seed.or(cfg.seed);
    cfg.tol = cli.tol.or(cfg.tol);
    cfg.jobs = cli.jobs.or(cfg.jobs);
    if let Some(j) = cfg.jobs {
        if j == 0 {
            return Err(SchemaError("jobs: must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let out_dir = cli
        .out_dir
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("caustica-out"));
    let ctx = Ctx { seed: cfg.seed.unwrap_or(0), tol: cfg.tol, out_dir, cfg };
    match cli.command {
        Command::Trace => commands::trace(&ctx),
        Command::Caustics => commands::caustics(&ctx),
        Command::MarineCheck => commands::marine_check(&ctx),
        Command::Classify { map, at, expect } => commands::classify_map(&ctx, &map, at.as_deref(), expect.as_deref()),
        Command::ModelVerify { n, variant, samples } => commands::model_verify_cmd(&ctx, n, variant.as_deref(), samples),
        Command::ComposeVerify => commands::compose_verify_cmd(&ctx),
        Command::Orders { mu, mode, n } => commands::orders(&ctx, &mu, &mode, n),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.downcast_ref::<SchemaError>().is_some() {
                ExitCode::from(2)
            } else {
                if e.downcast_ref::<CheckFailure>().is_none() {
                    for cause in e.chain().skip(1) {
                        eprintln!("  caused by: {cause}");
                    }
                }
                ExitCode::from(1)
            }
        }
    }
}
