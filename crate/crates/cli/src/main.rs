//! Command-line runner for the spin-flip experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

mod commands;
mod config;

use config::{CltConfig, CriticalConfig, OdeConfig, PhaseConfig, SimulateConfig};

#[derive(Parser, Debug)]
#[command(name = "spinfield", version, about = "Mean-field spin-flip dynamics in a binary random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the particle system and write moment trajectories.
    Simulate(SimulateArgs),
    /// Integrate the limiting moment ODE.
    Ode(OdeArgs),
    /// Scan the phase diagram at fixed beta.
    Phase(PhaseArgs),
    /// Compare replica covariances with the Gaussian fluctuation limit.
    Clt(CltArgs),
    /// Run the critical-scaling experiments.
    Critical(CriticalArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicas (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ModelFlags {
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Compare with the exact two-site law (requires N = 2).
    #[arg(long)]
    oracle: bool,
}

#[derive(Args, Debug)]
struct OdeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Relative tolerance of the integrator.
    #[arg(long)]
    rtol: Option<f64>,
    /// Absolute tolerance of the integrator.
    #[arg(long)]
    atol: Option<f64>,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args, Debug)]
struct CltArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args, Debug)]
struct CriticalArgs {
    #[command(flatten)]
    common: Common,
    /// `inhomogeneous` or `homogeneous`.
    #[arg(long)]
    mode: Option<config::CriticalMode>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Comma-separated list of system sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_model(cfg: &mut config::ModelBlock, flags: &ModelFlags) {
    set(&mut cfg.beta, flags.beta);
    set(&mut cfg.gamma, flags.gamma);
    set(&mut cfg.h, flags.h);
}

fn apply_common(run: &mut config::RunBlock, common: &Common) {
    set(&mut run.seed, common.seed);
    if common.threads.is_some() {
        run.threads = common.threads;
    }
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

/// Writes the effective config and code version next to the outputs.
fn write_effective<T: Serialize>(out: &Path, command: &str, cfg: &T) -> anyhow::Result<()> {
    let doc = serde_json::json!({
        "command": command,
        "version": spinfield_core::io::VERSION,
        "config": cfg,
    });
    spinfield_core::io::write_json(&out.join("config.json"), &doc)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg: SimulateConfig = load(a.common.config.as_deref())?;
            apply_common(&mut cfg.run, &a.common);
            apply_model(&mut cfg.model, &a.model);
            set(&mut cfg.n, a.n);
            set(&mut cfg.t_end, a.t_end);
            set(&mut cfg.sample_dt, a.sample_dt);
            set(&mut cfg.replicas, a.replicas);
            cfg.oracle |= a.oracle;
            prepare(&a.common.out, "simulate", &cfg, cfg.run.threads)?;
            commands::simulate(&cfg, &a.common.out)
        }
        Command::Ode(a) => {
            let mut cfg: OdeConfig = load(a.common.config.as_deref())?;
            apply_common(&mut cfg.run, &a.common);
            apply_model(&mut cfg.model, &a.model);
            set(&mut cfg.t_end, a.t_end);
            set(&mut cfg.sample_dt, a.sample_dt);
            set(&mut cfg.tolerances.rel, a.rtol);
            set(&mut cfg.tolerances.abs, a.atol);
            prepare(&a.common.out, "ode", &cfg, cfg.run.threads)?;
            commands::ode(&cfg, &a.common.out)
        }
        Command::Phase(a) => {
            let mut cfg: PhaseConfig = load(a.common.config.as_deref())?;
            apply_common(&mut cfg.run, &a.common);
            set(&mut cfg.beta, a.beta);
            set(&mut cfg.resolution, a.resolution);
            prepare(&a.common.out, "phase", &cfg, cfg.run.threads)?;
            commands::phase(&cfg, &a.common.out)
        }
        Command::Clt(a) => {
            let mut cfg: CltConfig = load(a.common.config.as_deref())?;
            apply_common(&mut cfg.run, &a.common);
            apply_model(&mut cfg.model, &a.model);
            set(&mut cfg.n, a.n);
            set(&mut cfg.t_end, a.t_end);
            set(&mut cfg.replicas, a.replicas);
            prepare(&a.common.out, "clt", &cfg, cfg.run.threads)?;
            commands::clt(&cfg, &a.common.out)
        }
        Command::Critical(a) => {
            let mut cfg: CriticalConfig = load(a.common.config.as_deref())?;
            apply_common(&mut cfg.run, &a.common);
            set(&mut cfg.mode, a.mode);
            // the run seed is authoritative for both experiment blocks
            cfg.inhomogeneous.seed = cfg.run.seed;
            cfg.homogeneous.seed = cfg.run.seed;
            match cfg.mode {
                config::CriticalMode::Inhomogeneous => {
                    let b = &mut cfg.inhomogeneous;
                    set(&mut b.replicas, a.replicas);
                    set(&mut b.t_end, a.t_end);
                    set(&mut b.n_values, a.n);
                }
                config::CriticalMode::Homogeneous => {
                    let b = &mut cfg.homogeneous;
                    set(&mut b.replicas, a.replicas);
                    set(&mut b.t_end, a.t_end);
                    set(&mut b.n_values, a.n);
                }
            }
            prepare(&a.common.out, "critical", &cfg, cfg.run.threads)?;
            commands::critical(&cfg, &a.common.out)
        }
    }
}

fn prepare<T: Serialize>(out: &Path, command: &str, cfg: &T, threads: Option<usize>) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    init_threads(threads)?;
    write_effective(out, command, cfg)
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_json("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json("runtime", &format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
