use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use mixcem_cli::config::{BcName, ExperimentConfig};
use mixcem_cli::experiment::{run_decay, run_experiment, RunOutput};
use mixcem_cli::report::{emit_csv, emit_decay_csv, emit_snapshots, emit_svg, Metric};
use mixcem_cli::selftest::run_selftest;

/// Mixed multiscale solver for heterogeneous linear elasticity.
#[derive(Parser, Debug)]
#[command(name = "mixcem", version)]
struct Cli {
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the config; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the config and write results.csv, plots and run.log.
    Run { config: PathBuf },
    /// Annulus energy decay of global basis functions, written to decay.csv.
    Decay { config: PathBuf },
    /// Like `run`, also writing per-square field rasters.
    Snapshot { config: PathBuf },
    /// Consistency checks on tiny meshes.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(cli: &Cli, path: &Path) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn write_run(cfg: &ExperimentConfig, out: &Path, result: &RunOutput) -> anyhow::Result<()> {
    emit_csv(&result.rows, &out.join("results.csv"))?;
    let mut log = result.log.join("\n");
    log.push('\n');
    std::fs::write(out.join("run.log"), log).context("writing run.log")?;
    let mut metrics = vec![Metric::Sigma];
    if cfg.bc != BcName::Neumann {
        metrics.push(Metric::U);
    }
    for nc in cfg.nc.values() {
        let coarse_h = 1.0 / nc as f64;
        let rows: Vec<_> = result.rows.iter().filter(|r| r.coarse_h == coarse_h).cloned().collect();
        for &metric in &metrics {
            let title = format!("{} {} nc={nc} nf={} Nbf={}", cfg.pattern.name(), cfg.bc.kind().name(), cfg.nf, cfg.nbf);
            let path = out.join(format!("{}_nc{nc}.svg", metric.label()));
            if let Err(e) = emit_svg(&rows, metric, &title, &path) {
                log::warn!("skipping {}: {e}", path.display());
            }
        }
    }
    if !result.snapshots.is_empty() {
        emit_snapshots(&result.snapshots, out)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } | Command::Snapshot { config } => {
            let (mut cfg, out) = load(&cli, config)?;
            if matches!(cli.command, Command::Snapshot { .. }) {
                cfg.snapshot = true;
            }
            let result = run_experiment(&cfg)?;
            write_run(&cfg, &out, &result)?;
            let failed = result.rows.iter().filter(|r| r.measurement().is_none()).count();
            println!("{} rows ({failed} failed) written to {}", result.rows.len(), out.display());
        }
        Command::Decay { config } => {
            let (cfg, out) = load(&cli, config)?;
            let profiles = run_decay(&cfg)?;
            let path = out.join("decay.csv");
            emit_decay_csv(&profiles, &path)?;
            for m in 1..=2 {
                let worst = profiles.iter().filter_map(|p| p.ratio(m)).fold(0.0_f64, f64::max);
                println!("max e_{}/e_{m} = {worst:.4}", m + 1);
            }
            println!("{} profiles written to {}", profiles.len(), path.display());
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(*seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
