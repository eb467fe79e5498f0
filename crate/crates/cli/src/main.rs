use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use maskattack::experiments::{registry, runner};

#[derive(Parser)]
#[command(name = "maskattack", version, about = "Action-removal attacks on self-play learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a registered experiment.
    Run {
        id: String,
        /// Comma-separated seeds, replacing the registry default.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Output root; results go to <out>/<id>/.
        #[arg(long, env = "MASKATTACK_OUT", default_value = "out")]
        out: PathBuf,
        /// Dotted-key override, e.g. schedule.outer_iterations=5. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Load the configuration from a TOML file instead of the registry.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Regenerate the plots of a finished run directory.
    Plot { dir: PathBuf },
    /// List the registered experiments.
    List,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::List => {
            for id in registry::IDS {
                println!("{id:<20} {}", registry::describe(id).unwrap_or(""));
            }
        }
        Command::Plot { dir } => {
            for path in runner::plot_dir(&dir).with_context(|| format!("plotting {}", dir.display()))? {
                println!("{}", path.display());
            }
        }
        Command::Run { id, seeds, out, overrides, config, dry_run } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let cfg = maskattack::experiments::ExperimentConfig::from_toml(&text)?;
                    if cfg.id != id {
                        bail!("{} configures `{}`, not `{id}`", path.display(), cfg.id);
                    }
                    cfg
                }
                None => registry::default_config(&id)?,
            };
            cfg = cfg.with_overrides(&overrides)?;
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            cfg.validate()?;
            if dry_run {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let report = runner::run_experiment(&cfg, &out).with_context(|| format!("writing under {}", out.display()))?;
            println!("{:<28} {:>4} {:>9} {:>8} {:>6}", "condition", "n", "mean", "ci95", "norm");
            for s in &report.summaries {
                println!("{:<28} {:>4} {:>9.3} {:>8.3} {:>6.3}", s.condition, s.n, s.mean, s.ci95, s.normalized);
            }
            for (k, v) in &report.extras {
                println!("{k} = {v:.4}");
            }
            println!("results in {}", out.join(&cfg.id).display());
        }
    }
    Ok(())
}
