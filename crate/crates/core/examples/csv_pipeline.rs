//! File-based workflow: write a panel, schedule and config to a directory,
//! run the pipeline from the config and list the outputs.

use policy_eval::pipeline::{export_fixtures, run_pipeline, write_results, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("policy-eval-example-{}", std::process::id()));
    export_fixtures(&dir, 7)?;
    let mut config = RunConfig::load(dir.join("rtc_like.toml"))?;
    config.bootstrap.replicates = 300;
    let artifacts = run_pipeline(&config)?;
    let out = dir.join("results");
    for name in write_results(&artifacts, &out)? {
        println!("{}", out.join(name).display());
    }
    let report = &artifacts.report;
    println!("{} fit warnings, mean RMSPE {:.2}", report.flags().len(), report.mean_rmspe().unwrap_or(f64::NAN));
    print!("{}", std::fs::read_to_string(out.join("att.csv"))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
