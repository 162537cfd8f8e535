//! `sbmpc`: weather generation, model identification, closed-loop sweeps and
//! reports for scenario-based MPC heating experiments.

use anyhow::Context;
use clap::{Parser, Subcommand};
use sbmpc::config::ExperimentConfig;
use sbmpc::harness::{self, MetricsRow};
use sbmpc::io::{sha256_hex, write_atomic};
use sbmpc::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_ALL_CELLS_FAILED: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "sbmpc", version, about = "Scenario-based MPC for building heating")]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seeds with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `paths.out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the realized weather (weather.csv) and the warm-up history (history.csv).
    Weather,
    /// Identify the linear model on excitation data and write linear_model.json.
    Identify,
    /// Run every (controller, alpha, seed) cell; write metrics.csv, traces and a manifest.
    Sweep,
    /// Print cost and discomfort tables and write a plot-ready CSV.
    Report {
        /// Metrics CSV; `<out>/metrics.csv` when omitted.
        metrics: Option<PathBuf>,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::InvalidParameter(_)) => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Failure { code, error }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure {
            code: EXIT_CONFIG,
            error: e.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_csv(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> sbmpc::Result<()>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    write_atomic(path, &buf)?;
    Ok(sha256_hex(&buf))
}

fn cmd_weather(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let seed = cfg.seeds[0];
    let series = harness::experiment_weather(cfg, seed)?;
    let (history, realized) = harness::split_weather(cfg, &series)?;
    let out = &cfg.paths.out_dir;
    let weather_path = out.join("weather.csv");
    let history_path = out.join("history.csv");
    let weather_sha = save_csv(&weather_path, |b| realized.write_csv(b))?;
    let history_sha = save_csv(&history_path, |b| history.write_csv(b))?;
    let manifest = serde_json::json!({
        "package_version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "seed": seed,
        "weather_csv": { "rows": realized.len(), "sha256": weather_sha },
        "history_csv": { "rows": history.len(), "sha256": history_sha },
    });
    write_manifest(&out.join("weather_manifest.json"), &manifest)?;
    println!(
        "wrote {} ({} rows) and {} ({} rows)",
        weather_path.display(),
        realized.len(),
        history_path.display(),
        history.len()
    );
    Ok(())
}

fn write_manifest(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let bytes = serde_json::to_vec_pretty(value).context("serializing manifest")?;
    write_atomic(path, &bytes)?;
    Ok(())
}

fn cmd_identify(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.ident_seed = s;
    }
    let report = harness::identify(&cfg)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let path = cfg.paths.out_dir.join("linear_model.json");
    report.model.save(&path)?;
    let manifest = serde_json::json!({
        "package_version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "ident_seed": cfg.ident_seed,
        "ident_days": cfg.ident_days,
        "mae_t_zone": report.mae[0],
        "mae_t_wall": report.mae[1],
        "condition": report.condition,
        "ridge_lambda": report.ridge_lambda,
        "spectral_radius": report.model.spectral_radius(),
    });
    write_manifest(&cfg.paths.out_dir.join("identify_manifest.json"), &manifest)?;
    println!("wrote {}", path.display());
    println!("one-step MAE: t_zone {:.6} K, t_wall {:.6} K", report.mae[0], report.mae[1]);
    println!(
        "condition {:.3e}, spectral radius {:.6}{}",
        report.condition,
        report.model.spectral_radius(),
        if report.is_stable() { "" } else { " (UNSTABLE)" }
    );
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let inputs = harness::prepare_inputs(cfg)?;
    let outcome = harness::sweep(cfg, &inputs, cfg.workers)?;
    let metrics = harness::write_sweep_outputs(&cfg.paths.out_dir, cfg, &inputs, &outcome)?;
    println!("wrote {} ({} rows)", metrics.display(), outcome.rows.len());
    for f in &outcome.failures {
        eprintln!("cell {} alpha={} seed={} failed: {}", f.controller, f.alpha, f.seed, f.error);
    }
    if outcome.rows.is_empty() && !outcome.failures.is_empty() {
        return Err(Failure {
            code: EXIT_ALL_CELLS_FAILED,
            error: anyhow::anyhow!("all {} cells failed", outcome.failures.len()),
        });
    }
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig, metrics: Option<PathBuf>) -> Result<(), Failure> {
    let path = metrics.unwrap_or_else(|| cfg.paths.out_dir.join("metrics.csv"));
    let rows: Vec<MetricsRow> = harness::load_metrics(&path)?;
    print!("{}", harness::render_report(&rows));
    let plot = path.with_file_name("discomfort_vs_alpha.csv");
    write_atomic(&plot, harness::plot_csv(&rows).as_bytes())?;
    if !rows.is_empty() {
        println!("\nwrote {}", plot.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Weather => cmd_weather(&cfg),
        Command::Identify => cmd_identify(&cfg, cli.seed),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Report { metrics } => cmd_report(&cfg, metrics),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
