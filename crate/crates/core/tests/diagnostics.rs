mod common;

use std::collections::BTreeMap;

use policy_eval::analysis::{analyze, AnalysisSettings};
use policy_eval::diagnostics::{
    export_plot_series, fit_report, max_placebo_shift, placebo_in_time, pretrend_att, FitFlag, FitThresholds,
};
use policy_eval::estimators::Estimator;
use policy_eval::fixtures::{self, SimulationSpec};
use policy_eval::inference::BootstrapConfig;
use policy_eval::pipeline::{export_fixtures, run_pipeline, write_results, RunConfig};
use policy_eval::staggered::FitMode;
use policy_eval::Error;

fn did_units() -> AnalysisSettings {
    AnalysisSettings {
        estimator: Estimator::Did,
        fit_mode: FitMode::AverageOfUnits,
        pooling_weight: None,
        ..Default::default()
    }
}

#[test]
fn injected_pre_trend_is_detected() {
    let spec = SimulationSpec { noise_sd: 0.2, ..Default::default() };
    let frame = fixtures::null_panel(21, &spec).frame().unwrap();
    // Treated units drift upward by 0.5 per period before adoption.
    let trended = common::map_outcomes(&frame, |u, t, y| {
        let unit = &frame.panel.units()[u];
        match frame.adoption(unit).and_then(|a| a.period()) {
            Some(a) if t < a => y + 0.5 * (t - a) as f64,
            _ => y,
        }
    });
    let clean = pretrend_att(&analyze(&frame, &did_units()).unwrap().att);
    let flagged = pretrend_att(&analyze(&trended, &did_units()).unwrap().att);
    assert!(flagged.n_excluding_zero() > clean.n_excluding_zero());
    assert!(flagged.n_excluding_zero() >= flagged.n_with_interval() / 2);
    assert!(flagged.statement().contains("not evidence"));
}

#[test]
fn placebo_on_null_data_is_small_and_covered() {
    let frame = fixtures::null_panel(22, &SimulationSpec::default()).frame().unwrap();
    let settings = AnalysisSettings::default();
    for shift in 1..=3 {
        let r = placebo_in_time(&frame, shift, &settings).unwrap();
        assert_eq!(r.by_event_time.len(), shift);
        let (lo, hi) = r.ci.unwrap();
        assert!(lo <= r.average_placebo_effect && r.average_placebo_effect <= hi);
        assert!(r.average_placebo_effect.abs() < 1.5, "shift {shift}: {}", r.average_placebo_effect);
    }
}

#[test]
fn placebo_never_sees_post_adoption_outcomes() {
    let frame = fixtures::rtc_like(23, 0.0).frame().unwrap();
    let poisoned = common::map_outcomes(&frame, |u, t, y| {
        let unit = &frame.panel.units()[u];
        match frame.adoption(unit).and_then(|a| a.period()) {
            Some(a) if t >= a => y + 1e4,
            _ => y,
        }
    });
    let settings = AnalysisSettings {
        bootstrap: Some(BootstrapConfig { replicates: 200, ..Default::default() }),
        ..Default::default()
    };
    let a = placebo_in_time(&frame, 2, &settings).unwrap();
    let b = placebo_in_time(&poisoned, 2, &settings).unwrap();
    assert!((a.average_placebo_effect - b.average_placebo_effect).abs() < 1e-9);
    for (k, v) in &a.by_event_time {
        assert!((v - b.by_event_time[k]).abs() < 1e-9);
    }
    let (alo, ahi) = a.ci.unwrap();
    let (blo, bhi) = b.ci.unwrap();
    assert!((alo - blo).abs() < 1e-9 && (ahi - bhi).abs() < 1e-9);
}

#[test]
fn oversized_placebo_shift_names_the_limiting_cohort() {
    let frame = fixtures::rtc_like(24, 0.0).frame().unwrap();
    let (max, cohort) = max_placebo_shift(&frame).unwrap();
    let err = placebo_in_time(&frame, max + 1, &did_units()).unwrap_err();
    assert!(matches!(err, Error::PlaceboShiftTooLarge { cohort: c, .. } if c == cohort));
    assert!(err.to_string().contains(&cohort.to_string()));
    assert!(placebo_in_time(&frame, 0, &did_units()).is_err());
}

#[test]
fn short_pre_periods_and_poor_fits_are_flagged() {
    let frame = fixtures::rtc_like(25, 0.0).frame().unwrap();
    let a = analyze(&frame, &AnalysisSettings { bootstrap: None, ..Default::default() }).unwrap();
    let report = fit_report(&frame, &a, FitThresholds { min_pre_periods: 10, poor_fit_ratio: 0.0 });
    let short: Vec<_> = report
        .flags()
        .into_iter()
        .filter(|(_, f)| matches!(f, FitFlag::ShortPrePeriod { .. }))
        .collect();
    // Adopters before 1987 have fewer than ten pre-periods in a 1977 panel.
    assert!(short.iter().any(|(e, _)| e.contains("1985")));
    assert!(!short.iter().any(|(e, _)| e.contains("2004")));
    assert!(report.flags().iter().any(|(_, f)| matches!(f, FitFlag::PoorFit { .. })));
    let lenient = fit_report(&frame, &a, FitThresholds { min_pre_periods: 1, poor_fit_ratio: 1e9 });
    assert!(lenient.flags().is_empty());
    assert!(report.aggregate.rmspe.is_some());
}

#[test]
fn plot_tables_carry_the_analysis() {
    let frame = fixtures::rtc_like(26, 0.0).frame().unwrap();
    let a = analyze(&frame, &AnalysisSettings { bootstrap: None, ..Default::default() }).unwrap();
    let report = fit_report(&frame, &a, FitThresholds::default());
    let tables = export_plot_series(&a, &report);
    assert_eq!(tables.counts.len(), a.att.by_event_time.len());
    let pooled = a.pooled.as_ref().unwrap();
    let n_weights: usize = pooled.weights.iter().map(|w| w.donors.len()).sum();
    assert!(tables.weights.len() <= n_weights && !tables.weights.is_empty());
    assert_eq!(tables.fit.len(), report.entries.len() + 1);
}

fn read_att(path: &std::path::Path) -> BTreeMap<i64, Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec.iter().skip(1).map(String::from).collect())
        })
        .collect()
}

#[test]
fn exported_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    export_fixtures(dir.path().join("fx"), 3).unwrap();
    let mut config = RunConfig::load(dir.path().join("fx/rtc_like.toml")).unwrap();
    config.bootstrap.replicates = 200;
    let artifacts = run_pipeline(&config).unwrap();
    let out = dir.path().join("out");
    write_results(&artifacts, &out).unwrap();

    let att = read_att(&out.join("att.csv"));
    assert_eq!(att.len(), artifacts.analysis.att.by_event_time.len());
    for (k, p) in &artifacts.analysis.att.by_event_time {
        let row = &att[k];
        assert!((row[0].parse::<f64>().unwrap() - p.estimate).abs() < 1e-9);
        assert!((row[1].parse::<f64>().unwrap() - p.ci_lower.unwrap()).abs() < 1e-9);
        assert!((row[2].parse::<f64>().unwrap() - p.ci_upper.unwrap()).abs() < 1e-9);
        assert_eq!(row[3].parse::<usize>().unwrap(), p.n_contributing);
    }

    // The manifest reproduces the run.
    let again = run_pipeline(&RunConfig::load(out.join("manifest.json")).unwrap()).unwrap();
    let out2 = dir.path().join("out2");
    write_results(&again, &out2).unwrap();
    assert_eq!(
        std::fs::read(out.join("att.csv")).unwrap(),
        std::fs::read(out2.join("att.csv")).unwrap()
    );
}
