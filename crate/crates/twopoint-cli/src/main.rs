//! Command line front end: one experiment per invocation, driven by a TOML
//! config, writing report.json plus CSV companions into the output
//! directory. Exit codes: 0 all checks pass, 1 a named check failed its
//! tolerance, 2 the configuration or setup was unusable.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

mod config;
mod experiments;
mod report;

use config::RunConfig;
use report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "twopoint",
    about = "numerical laboratory for two-point concavity on model spaces",
    after_help = experiments_help()
)]
struct Cli {
    /// Experiment to run; must match the experiment named in the config.
    experiment: String,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed recorded in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory recorded in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn experiments_help() -> String {
    let mut text = String::from("Experiments:\n");
    for exp in experiments::registry() {
        text.push_str(&format!("  {:<18} {}\n", exp.name(), exp.describe()));
    }
    text
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let raw = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("cannot read config {}", cli.config.display()))?;
    let mut cfg = RunConfig::from_toml(&raw)?;
    if cfg.experiment != cli.experiment {
        bail!(
            "config names experiment {} but the command line asked for {}",
            cfg.experiment,
            cli.experiment
        );
    }
    // Overrides land before the fingerprint so reruns of the same resolved
    // configuration hash identically.
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<Report> {
    if cfg.threads > 0 {
        // A second build attempt in the same process is harmless; the pool
        // is global and first-wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    let exp = experiments::by_name(&cfg.experiment)?;
    let out = exp.run(cfg)?;
    let report = Report::new(
        &cfg.experiment,
        cfg.fingerprint(),
        cfg.seed,
        out.grid,
        out.checks,
        out.payload,
    );
    report.write_json(&cfg.output.dir)?;
    if let Some((dim, rows)) = &out.samples {
        report::write_samples(&cfg.output.dir, *dim, rows)?;
    }
    if cfg.output.write_field {
        if let Some(field) = &out.field {
            report::write_field(&cfg.output.dir, field)?;
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg) {
        Ok(report) => {
            print!("{}", report.summary());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                let name = report
                    .first_failure()
                    .map(|c| c.name.clone())
                    .unwrap_or_else(|| "unknown".into());
                eprintln!("tolerance failure: {name}");
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("setup error: {err:#}");
            ExitCode::from(2)
        }
    }
}
