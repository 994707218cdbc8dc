mod common;

use proptest::prelude::*;

use policy_eval::estimators::{
    did_event_study, did_two_by_two, estimate, fe_ascm_effects, fe_ascm_effects_with, scm_effects, scm_fit,
    Estimator, WeightVector,
};
use policy_eval::fixtures;
use policy_eval::panel::donor_set;

const ALL: [Estimator; 3] = [Estimator::Did, Estimator::Scm, Estimator::FeAscm];

fn max_diff(a: &policy_eval::estimators::EffectSeries, b: &policy_eval::estimators::EffectSeries) -> f64 {
    assert_eq!(a.by_event_time.keys().collect::<Vec<_>>(), b.by_event_time.keys().collect::<Vec<_>>());
    a.by_event_time
        .iter()
        .map(|(k, v)| (v - b.by_event_time[k]).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn common_shocks_cancel(frame in common::small_frames(), shock in prop::collection::vec(-100.0f64..100.0, 12)) {
        let shocked = common::map_outcomes(&frame, |_, t, y| y + shock[(t - 1) as usize]);
        for focal in &frame.treated_units {
            for est in ALL {
                let a = estimate(&frame, focal, est).unwrap();
                let b = estimate(&shocked, focal, est).unwrap();
                prop_assert!(max_diff(&a, &b) < 1e-8, "{est} {focal}");
            }
        }
    }

    #[test]
    fn unit_levels_do_not_move_did_or_fe_ascm(frame in common::small_frames(), levels in prop::collection::vec(-100.0f64..100.0, 8)) {
        let shifted = common::map_outcomes(&frame, |u, _, y| y + levels[u]);
        for focal in &frame.treated_units {
            for est in [Estimator::Did, Estimator::FeAscm] {
                let a = estimate(&frame, focal, est).unwrap();
                let b = estimate(&shifted, focal, est).unwrap();
                prop_assert!(max_diff(&a, &b) < 1e-8, "{est} {focal}");
            }
        }
    }

    #[test]
    fn rescaling_outcomes_rescales_effects(frame in common::small_frames(), c in 0.1f64..20.0) {
        let scaled = common::map_outcomes(&frame, |_, _, y| c * y);
        for focal in &frame.treated_units {
            for est in ALL {
                let a = estimate(&frame, focal, est).unwrap();
                let b = estimate(&scaled, focal, est).unwrap();
                for (k, v) in &a.by_event_time {
                    prop_assert!((c * v - b.by_event_time[k]).abs() < 1e-7 * (1.0 + c * v.abs()));
                }
            }
        }
    }

    #[test]
    fn weights_lie_on_the_simplex(frame in common::small_frames()) {
        for focal in &frame.treated_units {
            for demean in [false, true] {
                let w = scm_fit(&frame, focal, demean).unwrap();
                prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
                prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(w.converged);
            }
        }
    }

    #[test]
    fn uniform_weights_give_the_averaged_did(frame in common::small_frames()) {
        for focal in &frame.treated_units {
            let donors = donor_set(&frame, focal).unwrap();
            let fe = fe_ascm_effects_with(&frame, focal, &WeightVector::uniform(donors)).unwrap();
            let table = did_two_by_two(&frame, focal).unwrap();
            let post: Vec<f64> = fe.post().map(|(_, v)| v).collect();
            let mean = post.iter().sum::<f64>() / post.len() as f64;
            prop_assert!((mean - table.did_estimate).abs() < 1e-10);
        }
    }

    #[test]
    fn fe_ascm_pre_gaps_average_to_zero(frame in common::small_frames()) {
        for focal in &frame.treated_units {
            let s = fe_ascm_effects(&frame, focal).unwrap();
            let pre: Vec<f64> = s.pre().map(|(_, v)| v).collect();
            prop_assert!(pre.iter().sum::<f64>().abs() < 1e-9);
            let bias: Vec<f64> = s.bias.values().copied().collect();
            prop_assert!(bias.windows(2).all(|w| w[0] == w[1]));
        }
    }
}

#[test]
fn did_reference_period_is_exactly_zero() {
    let frame = fixtures::rtc_like(2, 0.0).frame().unwrap();
    for focal in &frame.treated_units {
        assert_eq!(did_event_study(&frame, focal).unwrap().get(-1), Some(0.0));
    }
}

#[test]
fn late_adopter_draws_only_on_never_treated_donors() {
    let frame = fixtures::rtc_like(2, 0.0).frame().unwrap();
    let mut donors = donor_set(&frame, "OH").unwrap();
    donors.sort();
    assert_eq!(donors, ["CA", "DE", "HI", "MA", "MD", "NJ", "NY", "RI"]);
    // An early adopter can also borrow from states adopting after its horizon.
    let ga = donor_set(&frame, "GA").unwrap();
    assert!(ga.iter().any(|d| d == "MI"));
    assert!(!ga.iter().any(|d| d == "TN"));
}

#[test]
fn exact_convex_combination_is_recovered() {
    let f = fixtures::exact_convex(9, -3.0);
    let frame = f.frame().unwrap();
    let w = scm_fit(&frame, "focal", false).unwrap();
    assert!((w.get("D0") - 0.3).abs() < 1e-8);
    assert!((w.get("D1") - 0.7).abs() < 1e-8);
    let s = scm_effects(&frame, "focal", &w).unwrap();
    assert!(s.rmspe.unwrap() < 1e-8);
    for (_, v) in s.post() {
        assert!((v + 3.0).abs() < 1e-8);
    }
}

#[test]
fn constant_effect_is_recovered_exactly_on_noiseless_parallel_data() {
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|i| (1..=12).map(|t| 3.0 * i as f64 + 0.5 * t as f64).collect())
        .collect();
    let base = common::frame(rows, &[Some(8), None, None, None, None, None], 3, 4);
    let treated = common::map_outcomes(&base, |u, t, y| if u == 0 && t >= 8 { y + 2.0 } else { y });
    for est in [Estimator::Did, Estimator::FeAscm] {
        let s = estimate(&treated, "U0", est).unwrap();
        for (_, v) in s.post() {
            assert!((v - 2.0).abs() < 1e-9, "{est}");
        }
    }
}
