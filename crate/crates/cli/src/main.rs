use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hjm_cli::commands::run_command;
use hjm_cli::config::{parse_scenario, Command, ConfigError};
use hjm_cli::report::{write_report, Manifest};
use log::error;

#[derive(Parser, Debug)]
#[command(name = "hjm", version, about = "Simulate and verify multi-curve HJM models")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Simulate the ensemble and export paths, bonds and curves.
    Simulate,
    /// Check the drift restriction and the model conditions.
    VerifyDrift,
    /// Check cone invariance and price ordering.
    CheckMonotonicity,
    /// Compare the SPDE with its finite-dimensional realization.
    RealizeAffine,
    /// Minimal market model oracle.
    Mmm,
    /// Test deflated prices for the martingale property.
    MartingaleTest,
    /// Run the commands listed in the scenario.
    Run,
}

fn run(cli: &Cli) -> Result<bool> {
    let path = cli.config.as_ref().context("--config is required")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_scenario(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.paths {
        anyhow::ensure!(p >= 1, "--paths must be at least 1");
        cfg.n_paths = p;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let commands: Vec<Command> = match cli.command {
        Sub::Simulate => vec![Command::Simulate],
        Sub::VerifyDrift => vec![Command::VerifyDrift],
        Sub::CheckMonotonicity => vec![Command::CheckMonotonicity],
        Sub::RealizeAffine => vec![Command::RealizeAffine],
        Sub::Mmm => vec![Command::Mmm],
        Sub::MartingaleTest => vec![Command::MartingaleTest],
        Sub::Run => cfg.commands.clone(),
    };
    let outcomes = commands.iter().map(|&c| run_command(c, &cfg)).collect::<Result<Vec<_>>>()?;
    // the manifest hashes the file as given; overrides are recorded next to it
    let manifest = Manifest::new(&text, &cfg, &outcomes);
    let summary = write_report(&cfg.output_dir, &manifest, &outcomes)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(outcomes.iter().all(|o| o.pass))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HJM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e:#}");
            let issues = e.downcast_ref::<ConfigError>().map(|c| c.issues.clone()).unwrap_or_default();
            let doc = serde_json::json!({"status": "error", "message": format!("{e:#}"), "issues": issues});
            eprintln!("{doc}");
            ExitCode::from(2)
        }
    }
}
