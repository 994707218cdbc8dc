//! Staggered adoption: cohort estimates, the size-weighted ATT by event time
//! and the effect of partial pooling on the fit.

use policy_eval::analysis::{analyze, AnalysisSettings};
use policy_eval::fixtures::{self, SimulationSpec};
use policy_eval::staggered::{partially_pooled_fit, FitMode};

fn main() -> policy_eval::Result<()> {
    let spec = SimulationSpec { effect: 2.0, ..Default::default() };
    let frame = fixtures::factor_trends(3, &spec).frame()?;

    for (label, settings) in [
        ("did", AnalysisSettings {
            estimator: policy_eval::estimators::Estimator::Did,
            fit_mode: FitMode::AverageOfUnits,
            pooling_weight: None,
            bootstrap: None,
            ..Default::default()
        }),
        ("fe_ascm pooled", AnalysisSettings { bootstrap: None, ..Default::default() }),
    ] {
        let a = analyze(&frame, &settings)?;
        println!("{label} (true effect {})", spec.effect);
        for (k, p) in &a.att.by_event_time {
            println!("  k={k:>3} ATT {:>7.3}  n={}", p.estimate, p.n_contributing);
        }
        for c in &a.att.cohorts {
            println!("  cohort {} ({} units) k=0 {:.3}", c.cohort_year, c.size(), c.effect.get(0).unwrap());
        }
    }

    let years: Vec<i64> = frame.cohorts().into_keys().collect();
    println!("\n  nu   pooled   cohort");
    for nu in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let fit = partially_pooled_fit(&frame, &years, nu, true)?;
        println!("{nu:>4} {:>8.4} {:>8.4}", fit.pooled_term, fit.cohort_term);
    }
    Ok(())
}
