use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use policy_eval::estimators::Estimator;
use policy_eval::panel::Transform;
use policy_eval::pipeline::{
    export_fixtures, prepare, run_pipeline, run_placebo, write_placebo, write_results, RunConfig,
};
use policy_eval::Result;

#[derive(Parser)]
#[command(name = "policy-eval", version, about = "Staggered-adoption policy evaluation on panel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and the input data without estimating.
    Validate,
    /// Run the full pipeline and write result tables.
    Estimate,
    /// Placebo-in-time sweep over shifted adoption dates.
    Placebo,
    /// Write synthetic test panels with matching configurations.
    ExportFixtures,
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration (or a JSON run manifest).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Post-adoption horizon K.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// did, scm or fe_ascm.
    #[arg(long, global = true)]
    estimator: Option<Estimator>,
    /// identity or log.
    #[arg(long, global = true)]
    transform: Option<Transform>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Pooling weight in [0, 1].
    #[arg(long, global = true)]
    pooling: Option<f64>,
}

impl Overrides {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.k {
            c.post_horizon = v;
        }
        if let Some(v) = self.estimator {
            c.estimator = v;
        }
        if let Some(v) = self.transform {
            c.transform = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.replicates {
            c.bootstrap.replicates = v;
            c.bootstrap.enabled = true;
        }
        if let Some(v) = self.pooling {
            c.pooling_weight = v;
        }
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = cli.overrides.config()?;
    match cli.command {
        Command::Validate => {
            let p = prepare(&config)?;
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "ok: {} units, {} periods, {} focal units in {} cohorts, {} exclusions",
                p.frame.panel.n_units(),
                p.frame.panel.n_times(),
                p.frame.treated_units.len(),
                p.frame.cohorts().len(),
                p.frame.exclusions.len()
            );
        }
        Command::Estimate => {
            let artifacts = run_pipeline(&config)?;
            for w in &artifacts.warnings {
                eprintln!("warning: {w}");
            }
            let files = write_results(&artifacts, &config.out)?;
            println!("wrote {} files to {}", files.len(), config.out.display());
        }
        Command::Placebo => {
            let (prepared, results) = run_placebo(&config)?;
            for r in &results {
                println!("shift {}: {:.4}", r.shift, r.average_placebo_effect);
            }
            write_placebo(&config, &prepared, &results, &config.out)?;
        }
        Command::ExportFixtures => {
            let dir = cli.overrides.out.clone().unwrap_or_else(|| PathBuf::from("fixtures"));
            let files = export_fixtures(&dir, config.seed)?;
            println!("wrote {} files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
