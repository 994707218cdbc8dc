#![allow(dead_code)]

use proptest::prelude::*;

use policy_eval::panel::{apply_inclusion_filter, Adoption, Panel, StudyFrame, TreatmentSchedule};

/// Frame with `rows.len()` units over periods `1..`, built from explicit
/// adoption periods (`None` for never treated).
pub fn frame(rows: Vec<Vec<f64>>, adoptions: &[Option<i64>], k: usize, min_pre: usize) -> StudyFrame {
    let names: Vec<String> = (0..rows.len()).map(|i| format!("U{i}")).collect();
    let schedule: TreatmentSchedule = names
        .iter()
        .zip(adoptions)
        .map(|(n, a)| (n.clone(), a.map_or(Adoption::Never, Adoption::At)))
        .collect();
    apply_inclusion_filter(Panel::new(names, 1, rows).unwrap(), schedule, k, min_pre).unwrap()
}

/// Same frame with every outcome replaced by `f(unit, period, y)`.
pub fn map_outcomes(frame: &StudyFrame, f: impl Fn(usize, i64, f64) -> f64) -> StudyFrame {
    let p = &frame.panel;
    let rows = (0..p.n_units())
        .map(|u| p.times().iter().zip(p.row(u)).map(|(&t, &y)| f(u, t, y)).collect())
        .collect();
    let panel = Panel::new(p.units().to_vec(), p.first_time(), rows).unwrap();
    apply_inclusion_filter(panel, frame.schedule.clone(), frame.post_horizon, frame.min_pre_periods).unwrap()
}

/// Twelve periods, two focal units adopting at 8 and 9, K = 2, and three to
/// six never-treated donors with arbitrary outcomes.
pub fn small_frames() -> impl Strategy<Value = StudyFrame> {
    (3usize..=6).prop_flat_map(|donors| {
        prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 12), donors + 2).prop_map(move |rows| {
            let mut adoptions = vec![Some(8), Some(9)];
            adoptions.extend(std::iter::repeat_n(None, donors));
            frame(rows, &adoptions, 2, 4)
        })
    })
}
