//! Single-unit study of Ohio's 2004 adoption on the synthetic state panel:
//! the two-by-two table, the event-study DiD, the synthetic control and the
//! fixed-effects augmented estimate side by side.
//!
//! Pass a long-format CSV (unit,year,outcome) as the first argument to run
//! on real data instead.

use policy_eval::estimators::{did_event_study, did_two_by_two, estimate, scm_effects, scm_fit, Estimator};
use policy_eval::fixtures;
use policy_eval::io::{load_panel, Columns};
use policy_eval::panel::apply_inclusion_filter;

fn main() -> policy_eval::Result<()> {
    let frame = match std::env::args().nth(1) {
        Some(path) => {
            let panel = load_panel(path, &Columns::default())?.panel;
            apply_inclusion_filter(panel, fixtures::rtc_schedule(), 10, 4)?
        }
        None => fixtures::rtc_like(2004, -20.0).frame()?,
    };

    let table = did_two_by_two(&frame, "OH")?;
    println!("two-by-two");
    println!("  donors  pre {:8.2}  post {:8.2}  change {:8.2}", table.donor_pre, table.donor_post, table.donor_change());
    println!("  Ohio    pre {:8.2}  post {:8.2}  change {:8.2}", table.focal_pre, table.focal_post, table.focal_change());
    println!("  DiD {:.2}\n", table.did_estimate);

    let did = did_event_study(&frame, "OH")?;
    let w = scm_fit(&frame, "OH", false)?;
    let scm = scm_effects(&frame, "OH", &w)?;
    let fe = estimate(&frame, "OH", Estimator::FeAscm)?;

    println!("{:>4} {:>9} {:>9} {:>9}", "k", "did", "scm", "fe_ascm");
    for k in did.by_event_time.keys() {
        println!(
            "{k:>4} {:>9.2} {:>9.2} {:>9.2}",
            did.get(*k).unwrap(),
            scm.get(*k).unwrap(),
            fe.get(*k).unwrap()
        );
    }
    println!("\npre-period RMSPE: scm {:.2}, fe_ascm {:.2}", scm.rmspe.unwrap(), fe.rmspe.unwrap());
    println!("top synthetic control donors:");
    for (d, v) in w.ranked().into_iter().take(4) {
        println!("  {d} {v:.3}");
    }
    Ok(())
}
