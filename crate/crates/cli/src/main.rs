use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use blobflow_core::harness::{self, RunConfig};

/// Blob particle simulator for driven diffusion with boundary layers.
#[derive(Parser)]
#[command(name = "blobflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its CSV outputs.
    Run(RunArgs),
    /// Run a convergence sweep over particle counts and fit power laws.
    Sweep(SweepArgs),
    /// Fit power laws to an existing sweep_points.csv.
    Fit {
        /// Sweep points file.
        input: PathBuf,
        /// Where to write fit_report.csv (default: next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset configuration.
    Preset {
        /// sphere, box or pipe.
        name: String,
        /// Print the resolved config as TOML.
        #[arg(long)]
        show: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Preset to start from (ignored when --config is given).
    #[arg(long, default_value = "sphere")]
    experiment: String,
    /// Config file; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $BLOBFLOW_OUT, else ./blobflow-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a particle snapshot every this many steps.
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Particle count driving the resolution.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Particle counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => harness::preset(&common.experiment)?,
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(every) = common.snapshot_every {
        cfg.run.snapshot_every = every;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let mut cfg = load(&args.common)?;
            if let Some(n) = args.n {
                cfg.run.n = n;
            }
            let dir = cfg.out_dir();
            let s = harness::run(&cfg, Some(&dir))?;
            let last = s.series.last().context("empty time series")?;
            info!(
                "done: t = {:e}, {} particles ({} inside), M = {:e}, J = {:e}; outputs in {}",
                last.time,
                last.n_total,
                last.n_inside,
                last.mass_inside,
                last.inertia_inside,
                dir.display()
            );
        }
        Command::Sweep(args) => {
            let mut cfg = load(&args.common)?;
            if let Some(n) = args.n {
                cfg.sweep.n = n;
            }
            let dir = cfg.out_dir();
            let out = harness::sweep(&cfg, Some(&dir))?;
            for (n, e) in &out.failures {
                warn!("n = {n} failed: {e}");
            }
            for (name, fit) in [("M", &out.mass_fit), ("J_G", &out.inertia_fit)] {
                match fit {
                    Some(f) => info!(
                        "{name}: Q_inf = {:e}, a = {:e}, alpha = {:.4}",
                        f.q_inf, f.a, f.alpha
                    ),
                    None => warn!("{name}: no fit"),
                }
            }
            if !out.failures.is_empty() {
                bail!("{} sweep point(s) failed", out.failures.len());
            }
        }
        Command::Fit { input, out } => {
            let points = harness::read_sweep_points(&input)?;
            let (m, j) = harness::fit_points(&points);
            let target = out.unwrap_or_else(|| {
                input
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join("fit_report.csv")
            });
            let (m, j) = (m.context("fitting M")?, j.context("fitting J_G")?);
            harness::write_fits(&target, Some(&m), Some(&j))?;
            println!(
                "M: Q_inf = {:e}, a = {:e}, alpha = {:e}, residual = {:e}",
                m.q_inf, m.a, m.alpha, m.residual
            );
            println!(
                "J_G: Q_inf = {:e}, a = {:e}, alpha = {:e}, residual = {:e}",
                j.q_inf, j.a, j.alpha, j.residual
            );
        }
        Command::Preset { name, show } => {
            let cfg = harness::preset(&name)?;
            if show {
                print!("{}", cfg.to_toml());
            } else {
                let d = cfg.derived()?;
                println!(
                    "{name}: n = {}, t_end = {}, mass = {:e}, beta = {:e}, b = {:e}, dt = {:e}",
                    cfg.run.n, cfg.run.t_end, d.mass, d.beta, d.b, d.dt
                );
            }
        }
    }
    Ok(())
}
