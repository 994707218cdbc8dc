//! Pre-trend checks, placebo-in-time re-estimation, fit reports and
//! plot-ready tables.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{analyze, Analysis, AnalysisSettings};
use crate::error::{Error, Result};
use crate::estimators::EffectSeries;
use crate::inference::{average_over, reconstruct, wild_bootstrap_ci};
use crate::panel::StudyFrame;
use crate::staggered::AttResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PretrendPoint {
    pub estimate: f64,
    pub ci: Option<(f64, f64)>,
}

impl PretrendPoint {
    pub fn excludes_zero(&self) -> bool {
        self.ci.is_some_and(|(lo, hi)| lo > 0.0 || hi < 0.0)
    }
}

/// Pre-period slice of an estimate. It describes; it does not test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrendSummary {
    pub points: BTreeMap<i64, PretrendPoint>,
}

impl PretrendSummary {
    pub fn n_with_interval(&self) -> usize {
        self.points.values().filter(|p| p.ci.is_some()).count()
    }

    pub fn n_excluding_zero(&self) -> usize {
        self.points.values().filter(|p| p.excludes_zero()).count()
    }

    pub fn statement(&self) -> String {
        format!(
            "{} of {} pre-period intervals exclude 0 ({} pre-period estimates). \
             Absence of evidence against parallel pre-trends is not evidence for them.",
            self.n_excluding_zero(),
            self.n_with_interval(),
            self.points.len()
        )
    }
}

/// Pre-period estimates of a series with optional intervals by event time.
pub fn pretrend_series(
    series: &EffectSeries,
    intervals: Option<&BTreeMap<i64, (f64, f64)>>,
) -> PretrendSummary {
    PretrendSummary {
        points: series
            .pre()
            .map(|(k, estimate)| {
                let ci = intervals.and_then(|m| m.get(&k).copied());
                (k, PretrendPoint { estimate, ci })
            })
            .collect(),
    }
}

/// Pre-period slice of an ATT with its attached intervals.
pub fn pretrend_att(att: &AttResult) -> PretrendSummary {
    PretrendSummary {
        points: att
            .by_event_time
            .range(..0)
            .map(|(k, p)| {
                let ci = p.ci_lower.zip(p.ci_upper);
                (*k, PretrendPoint { estimate: p.estimate, ci })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboInTimeResult {
    pub shift: usize,
    /// Mean placebo estimate over the fabricated post window.
    pub average_placebo_effect: f64,
    pub ci: Option<(f64, f64)>,
    pub by_event_time: BTreeMap<i64, f64>,
}

/// Largest placebo shift: every focal unit keeps at least one pre-period.
/// Returns the shift and the adoption period of the limiting cohort.
pub fn max_placebo_shift(frame: &StudyFrame) -> Result<(usize, i64)> {
    frame
        .pre_period_counts
        .iter()
        .map(|(unit, &l)| {
            let t = frame.adoption(unit).and_then(|a| a.period()).expect("focal");
            (l.saturating_sub(1), t)
        })
        .min()
        .ok_or(Error::NoEvaluableTreatedUnits)
}

/// Frame with adoption moved `shift` periods earlier and every outcome at or
/// after a unit's true adoption hidden.
pub fn placebo_frame(frame: &StudyFrame, shift: usize) -> Result<StudyFrame> {
    let (max, cohort) = max_placebo_shift(frame)?;
    if shift == 0 || shift > max {
        return Err(Error::PlaceboShiftTooLarge { shift, max, cohort });
    }
    frame.shifted_earlier(shift)
}

/// Re-runs the analysis with adoption dates moved `shift` periods earlier
/// and averages the estimates over the `shift` fabricated post-periods.
pub fn placebo_in_time(
    frame: &StudyFrame,
    shift: usize,
    settings: &AnalysisSettings,
) -> Result<PlaceboInTimeResult> {
    let shifted = placebo_frame(frame, shift)?;
    let analysis = analyze(&shifted, settings)
        .map_err(|e| e.in_stage("placebo-in-time", format!("shift {shift}")))?;
    let window: Vec<i64> = (0..shift as i64).collect();
    let by_event_time: BTreeMap<i64, f64> = window
        .iter()
        .filter_map(|&k| analysis.att.estimate(k).map(|v| (k, v)))
        .collect();
    if by_event_time.len() != window.len() {
        return Err(Error::Validation(format!(
            "placebo shift {shift} leaves fabricated post-periods without estimates"
        )));
    }
    let average = by_event_time.values().sum::<f64>() / window.len() as f64;
    let ci = match (&analysis.contributions, &settings.bootstrap) {
        (Some(c), Some(config)) => {
            let averaged = average_over(c, &window, 0)?;
            debug_assert!((reconstruct(&averaged)[&0] - average).abs() < 1e-8);
            Some(wild_bootstrap_ci(&averaged, config)?[&0])
        }
        _ => None,
    };
    Ok(PlaceboInTimeResult {
        shift,
        average_placebo_effect: average,
        ci,
        by_event_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitFlag {
    ShortPrePeriod { n_pre: usize, minimum: usize },
    PoorFit { rmspe: f64, threshold: f64 },
    NonConverged,
}

impl std::fmt::Display for FitFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitFlag::ShortPrePeriod { n_pre, minimum } => {
                write!(f, "short-pre-period({n_pre}<{minimum})")
            }
            FitFlag::PoorFit { rmspe, threshold } => {
                write!(f, "poor-fit({rmspe:.3}>{threshold:.3})")
            }
            FitFlag::NonConverged => f.write_str("non-converged"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitThresholds {
    /// Pre-period counts below this are flagged.
    pub min_pre_periods: usize,
    /// RMSPE above this multiple of the target's pre-period outcome standard
    /// deviation is flagged.
    pub poor_fit_ratio: f64,
}

impl Default for FitThresholds {
    fn default() -> Self {
        FitThresholds {
            min_pre_periods: 5,
            poor_fit_ratio: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitEntry {
    pub entity: String,
    pub rmspe: Option<f64>,
    pub n_pre: usize,
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub thresholds: FitThresholds,
    pub entries: Vec<FitEntry>,
    /// RMSPE of the ATT pre-period series.
    pub aggregate: FitEntry,
}

/// Entity label of the aggregate row in reports and tables.
pub const AGGREGATE: &str = "aggregate";

impl FitReport {
    pub fn flags(&self) -> Vec<(String, FitFlag)> {
        self.entries
            .iter()
            .flat_map(|e| e.flags.iter().map(move |f| (e.entity.clone(), *f)))
            .collect()
    }

    /// Mean RMSPE over entries that have one.
    pub fn mean_rmspe(&self) -> Option<f64> {
        let v: Vec<f64> = self.entries.iter().filter_map(|e| e.rmspe).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn population_sd(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn entry_for(frame: &StudyFrame, series: &EffectSeries, thresholds: &FitThresholds) -> FitEntry {
    let n_pre = series.n_pre();
    let mut flags = Vec::new();
    if n_pre < thresholds.min_pre_periods {
        flags.push(FitFlag::ShortPrePeriod {
            n_pre,
            minimum: thresholds.min_pre_periods,
        });
    }
    if let (Some(rmspe), Some(component)) = (series.rmspe, series.design.first()) {
        let cmp = &component.comparison;
        let pre: Vec<f64> = cmp
            .window
            .pre
            .iter()
            .map(|&k| cmp.treated.iter().map(|m| m.weight * frame.panel.at(m.unit, cmp.window.calendar(k))).sum())
            .collect();
        if !pre.is_empty() && series.design.len() == 1 {
            let threshold = thresholds.poor_fit_ratio * population_sd(&pre);
            if rmspe > threshold {
                flags.push(FitFlag::PoorFit { rmspe, threshold });
            }
        }
    }
    if series.donor_weights.as_ref().is_some_and(|w| !w.converged) {
        flags.push(FitFlag::NonConverged);
    }
    FitEntry {
        entity: series.focal.clone(),
        rmspe: series.rmspe,
        n_pre,
        flags,
    }
}

/// RMSPE and warnings for every fitted series of an analysis. Cohorts
/// averaged from their members list the members too.
pub fn fit_report(frame: &StudyFrame, analysis: &Analysis, thresholds: FitThresholds) -> FitReport {
    let mut entries = Vec::new();
    for cohort in &analysis.att.cohorts {
        for member in &cohort.member_effects {
            entries.push(entry_for(frame, member, &thresholds));
        }
        entries.push(entry_for(frame, &cohort.effect, &thresholds));
    }
    let aggregate_series = analysis.att.as_series(AGGREGATE);
    FitReport {
        thresholds,
        entries,
        aggregate: FitEntry {
            entity: AGGREGATE.to_string(),
            rmspe: aggregate_series.rmspe,
            n_pre: aggregate_series.n_pre(),
            flags: Vec::new(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyRow {
    pub entity: String,
    pub event_time: i64,
    pub estimate: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub entity: String,
    pub donor: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub entity: String,
    pub rmspe: Option<f64>,
    pub n_pre: usize,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    pub event_time: i64,
    pub n_contributing: usize,
}

/// Tidy tables for event-study and gap plots, donor weights, RMSPE
/// histograms and contributing counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotTables {
    pub event_study: Vec<EventStudyRow>,
    pub weights: Vec<WeightRow>,
    pub fit: Vec<FitRow>,
    pub counts: Vec<CountRow>,
}

pub fn export_plot_series(analysis: &Analysis, report: &FitReport) -> PlotTables {
    let att = &analysis.att;
    let mut event_study: Vec<EventStudyRow> = att
        .by_event_time
        .iter()
        .map(|(k, p)| EventStudyRow {
            entity: AGGREGATE.to_string(),
            event_time: *k,
            estimate: p.estimate,
            ci_lower: p.ci_lower,
            ci_upper: p.ci_upper,
        })
        .collect();
    let mut weights = Vec::new();
    for cohort in &att.cohorts {
        let intervals = analysis.cohort_intervals.get(&cohort.cohort_year);
        let series = cohort.member_effects.iter().chain(std::iter::once(&cohort.effect));
        for s in series {
            let is_cohort = std::ptr::eq(s, &cohort.effect);
            for (k, v) in &s.by_event_time {
                let ci = if is_cohort { intervals.and_then(|m| m.get(k)) } else { None };
                event_study.push(EventStudyRow {
                    entity: s.focal.clone(),
                    event_time: *k,
                    estimate: *v,
                    ci_lower: ci.map(|c| c.0),
                    ci_upper: ci.map(|c| c.1),
                });
            }
            if let Some(w) = &s.donor_weights {
                weights.extend(w.ranked().into_iter().map(|(donor, weight)| WeightRow {
                    entity: s.focal.clone(),
                    donor: donor.to_string(),
                    weight,
                }));
            }
        }
    }
    let fit = report
        .entries
        .iter()
        .chain(std::iter::once(&report.aggregate))
        .map(|e| FitRow {
            entity: e.entity.clone(),
            rmspe: e.rmspe,
            n_pre: e.n_pre,
            flags: e.flags.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"),
        })
        .collect();
    let counts = att
        .by_event_time
        .iter()
        .map(|(k, p)| CountRow {
            event_time: *k,
            n_contributing: p.n_contributing,
        })
        .collect();
    PlotTables {
        event_study,
        weights,
        fit,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Estimator;
    use crate::inference::BootstrapConfig;
    use crate::panel::{apply_inclusion_filter, Adoption, Panel, TreatmentSchedule};
    use crate::staggered::FitMode;

    fn frame() -> StudyFrame {
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..12).map(|t| 5.0 + i as f64 + ((i * 5 + t * 7) % 13) as f64 * 0.3).collect())
            .collect();
        let names: Vec<String> = (0..7).map(|i| format!("U{i}")).collect();
        let adoptions = [
            Adoption::At(6),
            Adoption::At(6),
            Adoption::At(9),
            Adoption::Never,
            Adoption::Never,
            Adoption::Never,
            Adoption::Never,
        ];
        let schedule: TreatmentSchedule = names.iter().cloned().zip(adoptions).collect();
        apply_inclusion_filter(Panel::new(names, 1, rows).unwrap(), schedule, 2, 2).unwrap()
    }

    fn settings() -> AnalysisSettings {
        AnalysisSettings {
            bootstrap: Some(BootstrapConfig {
                replicates: 200,
                ..Default::default()
            }),
            ..Default::default()
        }
    }

    #[test]
    fn zero_series_has_no_excluding_intervals() {
        let s = EffectSeries::from_values("x", Estimator::Did, [(-2, 0.0), (-1, 0.0), (0, 1.0)].into_iter().collect());
        let ci = [(-2, (0.0, 0.0)), (-1, (0.0, 0.0))].into_iter().collect();
        let p = pretrend_series(&s, Some(&ci));
        assert_eq!(p.points.len(), 2);
        assert_eq!(p.n_excluding_zero(), 0);
    }

    #[test]
    fn max_shift_names_earliest_cohort() {
        let f = frame();
        assert_eq!(max_placebo_shift(&f).unwrap(), (4, 6));
        let err = placebo_frame(&f, 5).unwrap_err();
        assert!(matches!(err, Error::PlaceboShiftTooLarge { shift: 5, max: 4, cohort: 6 }));
        assert!(err.to_string().contains("cohort 6"));
    }

    #[test]
    fn placebo_frame_hides_treated_outcomes() {
        let f = frame();
        let p = placebo_frame(&f, 2).unwrap();
        assert_eq!(p.post_horizon, 1);
        for (u, unit) in p.panel.units().iter().enumerate() {
            if let Some(t) = f.adoption(unit).and_then(|a| a.period()) {
                for time in t..=f.panel.last_time() {
                    assert!(!p.panel.is_observed(u, time), "{unit} at {time}");
                }
            }
        }
        assert_eq!(p.treated_units, f.treated_units);
        assert_eq!(p.adoption("U0"), Some(Adoption::At(4)));
    }

    #[test]
    fn placebo_runs_and_reports_window_mean() {
        let f = frame();
        let r = placebo_in_time(&f, 2, &settings()).unwrap();
        assert_eq!(r.by_event_time.len(), 2);
        let mean = r.by_event_time.values().sum::<f64>() / 2.0;
        assert!((r.average_placebo_effect - mean).abs() < 1e-12);
        let (lo, hi) = r.ci.unwrap();
        assert!(lo <= r.average_placebo_effect && r.average_placebo_effect <= hi);
    }

    #[test]
    fn tables_have_expected_shape() {
        let f = frame();
        let s = AnalysisSettings {
            fit_mode: FitMode::AverageOfUnits,
            ..settings()
        };
        let a = analyze(&f, &s).unwrap();
        let report = fit_report(&f, &a, FitThresholds::default());
        let t = export_plot_series(&a, &report);
        let gap_rows = t.event_study.iter().filter(|r| r.entity == "U2").count();
        assert_eq!(gap_rows, f.window_for(9).event_times().count());
        assert_eq!(t.fit.iter().filter(|r| r.entity == AGGREGATE).count(), 1);
        assert_eq!(t.fit.last().unwrap().entity, AGGREGATE);
        for entity in ["U0", "U1", "U2"] {
            let w: Vec<f64> = t.weights.iter().filter(|r| r.entity == entity).map(|r| r.weight).collect();
            assert!(w.windows(2).all(|p| p[0] >= p[1]));
        }
        assert_eq!(t.counts.iter().find(|c| c.event_time == 0).unwrap().n_contributing, 3);
    }
}
