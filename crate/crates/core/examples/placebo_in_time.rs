//! Placebo-in-time checks: pretend adoption happened earlier and see whether
//! the method finds an "effect" where none can exist.

use policy_eval::analysis::AnalysisSettings;
use policy_eval::diagnostics::{max_placebo_shift, placebo_in_time};
use policy_eval::fixtures::{self, SimulationSpec};
use policy_eval::inference::BootstrapConfig;

fn main() -> policy_eval::Result<()> {
    let frame = fixtures::factor_trends(4, &SimulationSpec { effect: 3.0, ..Default::default() }).frame()?;
    let (max, cohort) = max_placebo_shift(&frame)?;
    println!("largest shift {max} (limited by cohort {cohort})");
    let settings = AnalysisSettings {
        bootstrap: Some(BootstrapConfig { replicates: 500, ..Default::default() }),
        ..Default::default()
    };
    for shift in 1..=max.min(4) {
        let r = placebo_in_time(&frame, shift, &settings)?;
        let (lo, hi) = r.ci.unwrap();
        println!("shift {shift}: average placebo effect {:>7.3} [{lo:.3}, {hi:.3}]", r.average_placebo_effect);
    }
    match placebo_in_time(&frame, max + 1, &settings) {
        Err(e) => println!("shift {}: {e}", max + 1),
        Ok(_) => unreachable!("shift beyond the maximum"),
    }
    Ok(())
}
