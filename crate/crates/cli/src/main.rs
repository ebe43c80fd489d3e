use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simest_cli::commands::{cmd_benchmark, cmd_estimate, cmd_lag_scan, cmd_simulate, load_config};
use simest_cli::config::{ConfigError, LagScanBlock, MethodKind, Overrides};

#[derive(Parser)]
#[command(name = "simest", version, about = "Bayesian estimation of simulation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (a suite file for `benchmark`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, replacing `seeds.master`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Divide iterations, replications and series lengths by this factor.
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodKind>,
    /// Comma-separated lag lengths for `lag-scan`.
    #[arg(long, global = true, value_delimiter = ',')]
    lags: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the pseudo-empirical series.
    Simulate,
    /// Sample the posterior and write trace, sample and summary.
    Estimate,
    /// Conditional density curves for several lag lengths.
    LagScan {
        /// Comma-separated conditioning values, oldest first.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        window: Option<Vec<f64>>,
    },
    /// Run (or load) paired experiments and write the comparison tables.
    Benchmark {
        /// Load existing summaries instead of estimating.
        #[arg(long)]
        precomputed: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = cli.config.ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let overrides = Overrides { seed: cli.seed, scale: cli.scale, method: cli.method, lags: cli.lags };
    let scale = cli.scale.unwrap_or(1.0);
    match cli.command {
        Command::Benchmark { precomputed } => {
            let outcome = cmd_benchmark(&config, &overrides, cli.out, precomputed)?;
            if let Some(m) = outcome.metrics {
                println!("{}", serde_json::to_string_pretty(&m)?);
            }
        }
        Command::Simulate => {
            let cfg = load_config(&config, &overrides)?;
            for p in cmd_simulate(&cfg, cli.out.unwrap_or_else(|| cfg.output_dir()), scale)? {
                println!("{}", p.display());
            }
        }
        Command::Estimate => {
            let cfg = load_config(&config, &overrides)?;
            let o = cmd_estimate(&cfg, cli.out.unwrap_or_else(|| cfg.output_dir()), scale)?;
            println!("{}", serde_json::to_string_pretty(&o.report)?);
        }
        Command::LagScan { window } => {
            let mut cfg = load_config(&config, &overrides)?;
            if let Some(w) = window {
                let block = cfg.lag_scan.get_or_insert(LagScanBlock { lags: vec![1, 2, 3], window: None, grid_points: 2001 });
                block.window = Some(w);
            }
            let scan = cmd_lag_scan(&cfg, cli.out.unwrap_or_else(|| cfg.output_dir()), scale)?;
            for (a, b, d) in &scan.distances {
                println!("TV(L={a}, L={b}) = {d:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
