use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cmdp_irl::cli::{exit_code, run, Mode, RunConfig};
use cmdp_irl::SlipMode;

/// Constrained MDP solver and reward/constraint recovery from demonstrations.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// forward | demo | irl | e2e | oracle-check
    #[arg(long)]
    mode: Option<Mode>,
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds for e2e
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Demonstrations per dataset
    #[arg(long)]
    samples: Option<usize>,
    /// Exponentiated-gradient step size
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// all | other
    #[arg(long)]
    slip_mode: Option<SlipMode>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Also write CSV grids and the state-visitation table
    #[arg(long)]
    csv: bool,
    /// Model JSON file instead of a gridworld
    #[arg(long)]
    model: Option<PathBuf>,
    /// Weight-pair JSON file for forward/demo
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Dataset to read (irl) or write (demo)
    #[arg(long)]
    dataset: Option<PathBuf>,
}

fn init_logging() {
    let level = match std::env::var("CMDP_IRL_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn merge(args: Args) -> cmdp_irl::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    set!(out, seed, seeds, horizon, samples, kappa, tol, max_iters, slip_mode, gamma);
    if args.mode.is_some() {
        cfg.mode = args.mode;
    }
    for (slot, v) in [
        (&mut cfg.model, args.model),
        (&mut cfg.weights, args.weights),
        (&mut cfg.dataset, args.dataset),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    cfg.csv |= args.csv;
    Ok(cfg)
}

fn main() -> ExitCode {
    init_logging();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = merge(args).and_then(|cfg| run(&cfg));
    match outcome {
        Ok((status, report)) => {
            print!("{report}");
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
