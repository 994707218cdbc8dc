//! Per-focal-unit effect estimators.
//!
//! All three estimators share one linear form. For a focal target adopting at
//! `T` and event time `k`,
//!
//! ```text
//! effect_k = Σ_m s_m (Y_m,T+k − ref_m) − Σ_i w_i (Y_i,T+k − ref_i)
//! ```
//!
//! where `s_m` are the shares of the treated members (one member with share 1
//! for a single unit, `1/N_s` each for a cohort average), `w_i` are donor
//! weights, and `ref_u` is a per-unit reference level:
//!
//! | estimator | donor weights        | reference level               |
//! |-----------|----------------------|-------------------------------|
//! | DiD       | uniform `1/N_j`      | outcome at `T − 1`            |
//! | SCM       | simplex fit, raw     | none (0)                      |
//! | FE-ASCM   | simplex fit, demeaned| mean over all pre-periods     |
//!
//! Keeping the form explicit in [`Comparison`] lets the bootstrap split every
//! estimate into per-unit contributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{EventWindow, Panel, StudyFrame};
use crate::simplex::{solve_simplex_ls, SimplexLsProblem, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Did,
    Scm,
    FeAscm,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Did => "did",
            Estimator::Scm => "scm",
            Estimator::FeAscm => "fe_ascm",
        }
    }

    fn reference(self) -> Reference {
        match self {
            Estimator::Did => Reference::LastPre,
            Estimator::Scm => Reference::Zero,
            Estimator::FeAscm => Reference::PreMean,
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "did" => Ok(Estimator::Did),
            "scm" => Ok(Estimator::Scm),
            "fe_ascm" | "fe_scm" | "ascm" => Ok(Estimator::FeAscm),
            other => Err(Error::Validation(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Per-unit level subtracted before comparing a post-period outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Outcome in the last pre-period (`k = −1`).
    LastPre,
    Zero,
    /// Mean outcome over every pre-period.
    PreMean,
}

/// Donor weights of one synthetic control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub donors: Vec<String>,
    pub weights: Vec<f64>,
    /// Mean squared pre-period error at the solution (after demeaning when
    /// the fit was demeaned).
    pub objective_value: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl WeightVector {
    /// `1/N` on every donor.
    pub fn uniform(donors: Vec<String>) -> Self {
        let n = donors.len() as f64;
        WeightVector {
            weights: vec![1.0 / n; donors.len()],
            donors,
            objective_value: f64::NAN,
            iterations_used: 0,
            converged: true,
        }
    }

    pub fn get(&self, donor: &str) -> f64 {
        self.donors
            .iter()
            .position(|d| d == donor)
            .map(|i| self.weights[i])
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.donors.iter().map(String::as_str).zip(self.weights.iter().copied())
    }

    /// Donors by descending weight; ties keep donor order.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<_> = self.iter().collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Panel row index.
    pub unit: usize,
    pub weight: f64,
    /// Reference level `ref_u` of this unit.
    pub reference: f64,
}

/// Linear structure of one focal-versus-synthetic comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub window: EventWindow,
    pub reference: Reference,
    /// Treated members with shares summing to one.
    pub treated: Vec<Member>,
    /// Donors with weights summing to one.
    pub donors: Vec<Member>,
}

impl Comparison {
    fn build(
        panel: &Panel,
        window: EventWindow,
        reference: Reference,
        treated: &[(usize, f64)],
        donors: &[(usize, f64)],
    ) -> Self {
        let level = |u: usize| match reference {
            Reference::Zero => 0.0,
            Reference::LastPre => panel.at(u, window.adoption - 1),
            Reference::PreMean => pre_mean(panel, u, &window),
        };
        let members = |list: &[(usize, f64)]| {
            list.iter()
                .map(|&(unit, weight)| Member {
                    unit,
                    weight,
                    reference: level(unit),
                })
                .collect()
        };
        Comparison {
            treated: members(treated),
            donors: members(donors),
            window,
            reference,
        }
    }

    /// `Y_u,T+k − ref_u`.
    pub fn delta(&self, panel: &Panel, member: &Member, k: i64) -> f64 {
        panel.at(member.unit, self.window.calendar(k)) - member.reference
    }

    pub fn treated_delta(&self, panel: &Panel, k: i64) -> f64 {
        self.treated
            .iter()
            .map(|m| m.weight * self.delta(panel, m, k))
            .sum()
    }

    pub fn synthetic_delta(&self, panel: &Panel, k: i64) -> f64 {
        self.donors
            .iter()
            .map(|m| m.weight * self.delta(panel, m, k))
            .sum()
    }

    pub fn effect(&self, panel: &Panel, k: i64) -> f64 {
        self.treated_delta(panel, k) - self.synthetic_delta(panel, k)
    }

    /// Effects over the whole event window.
    pub fn effects(&self, panel: &Panel) -> BTreeMap<i64, f64> {
        self.window
            .event_times()
            .map(|k| {
                // The reference-period difference is zero by definition.
                let v = if self.reference == Reference::LastPre && k == -1 {
                    0.0
                } else {
                    self.effect(panel, k)
                };
                (k, v)
            })
            .collect()
    }
}

fn pre_mean(panel: &Panel, u: usize, window: &EventWindow) -> f64 {
    let sum: f64 = window
        .pre
        .iter()
        .map(|&k| panel.at(u, window.calendar(k)))
        .sum();
    sum / window.pre_len() as f64
}

/// A comparison scaled by `coefficient` inside a larger estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub coefficient: f64,
    pub comparison: Comparison,
}

/// Effect estimates indexed by event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSeries {
    /// Focal unit or cohort label.
    pub focal: String,
    pub estimator: Estimator,
    pub by_event_time: BTreeMap<i64, f64>,
    pub donor_weights: Option<WeightVector>,
    /// Pre-period root mean squared gap; `None` when there is no informative
    /// pre-period entry.
    pub rmspe: Option<f64>,
    /// SCM estimate minus FE-ASCM estimate (same weights) per event time;
    /// empty for other estimators.
    pub bias: BTreeMap<i64, f64>,
    /// Linear structure the estimates were computed from. Empty for series
    /// built with [`EffectSeries::from_values`].
    #[serde(skip)]
    pub design: Vec<Component>,
}

impl EffectSeries {
    /// Series without stored weights or donor sets.
    pub fn from_values(
        focal: impl Into<String>,
        estimator: Estimator,
        by_event_time: BTreeMap<i64, f64>,
    ) -> Self {
        let mut series = EffectSeries {
            focal: focal.into(),
            estimator,
            by_event_time,
            donor_weights: None,
            rmspe: None,
            bias: BTreeMap::new(),
            design: Vec::new(),
        };
        series.rmspe = rmspe(&series).ok();
        series
    }

    pub fn get(&self, k: i64) -> Option<f64> {
        self.by_event_time.get(&k).copied()
    }

    pub fn pre(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.by_event_time.range(..0).map(|(k, v)| (*k, *v))
    }

    pub fn post(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.by_event_time.range(0..).map(|(k, v)| (*k, *v))
    }

    /// Number of pre-period entries.
    pub fn n_pre(&self) -> usize {
        self.by_event_time.range(..0).count()
    }
}

/// Root mean squared pre-period gap. For DiD the definitional zero at
/// `k = −1` is left out.
pub fn rmspe(series: &EffectSeries) -> Result<f64> {
    let gaps: Vec<f64> = series
        .pre()
        .filter(|&(k, _)| !(series.estimator == Estimator::Did && k == -1))
        .map(|(_, v)| v)
        .collect();
    if gaps.is_empty() {
        return Err(Error::NoPrePeriod(format!("effect series for `{}`", series.focal)));
    }
    Ok((gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt())
}

/// Focal target: one unit, or the equal-share average of a cohort.
#[derive(Debug, Clone)]
pub(crate) struct Target {
    pub label: String,
    pub adoption: i64,
    pub members: Vec<usize>,
}

impl Target {
    pub(crate) fn unit(frame: &StudyFrame, focal: &str) -> Result<Target> {
        let adoption = frame.focal_adoption(focal)?;
        Ok(Target {
            label: focal.to_string(),
            adoption,
            members: vec![frame.panel.unit_index(focal).expect("focal in panel")],
        })
    }

    pub(crate) fn cohort(frame: &StudyFrame, label: String, units: &[String]) -> Result<Target> {
        let mut adoption = None;
        let mut members = Vec::with_capacity(units.len());
        for unit in units {
            let t = frame.focal_adoption(unit)?;
            if adoption.is_some_and(|a| a != t) {
                return Err(Error::Validation(format!(
                    "cohort `{label}` mixes adoption periods"
                )));
            }
            adoption = Some(t);
            members.push(frame.panel.unit_index(unit).expect("focal in panel"));
        }
        Ok(Target {
            label,
            adoption: adoption.ok_or(Error::Empty("cohort has no members"))?,
            members,
        })
    }

    fn shares(&self) -> Vec<(usize, f64)> {
        let s = 1.0 / self.members.len() as f64;
        self.members.iter().map(|&m| (m, s)).collect()
    }

    /// Pre-period series of the (averaged) target.
    fn pre_series(&self, panel: &Panel, window: &EventWindow) -> Vec<f64> {
        window
            .pre
            .iter()
            .map(|&k| {
                let t = window.calendar(k);
                self.members.iter().map(|&m| panel.at(m, t)).sum::<f64>()
                    / self.members.len() as f64
            })
            .collect()
    }
}

/// Donor pool of a target (cohort members share one pool).
pub(crate) fn donor_pool(frame: &StudyFrame, target: &Target) -> Result<Vec<usize>> {
    let donors = frame.donor_indices_for(target.adoption, &target.members);
    if donors.is_empty() {
        return Err(Error::NoValidDonors {
            focal: target.label.clone(),
            horizon: frame.post_horizon,
        });
    }
    Ok(donors)
}

fn demeaned(series: Vec<f64>) -> Vec<f64> {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series.into_iter().map(|v| v - mean).collect()
}

/// Target pre-period series and donor dictionary columns, optionally demeaned.
pub(crate) fn fit_data(
    frame: &StudyFrame,
    target: &Target,
    donors: &[usize],
    demean: bool,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let window = frame.window_for(target.adoption);
    let prep = |s: Vec<f64>| if demean { demeaned(s) } else { s };
    let x = prep(target.pre_series(&frame.panel, &window));
    let columns = donors
        .iter()
        .map(|&d| {
            prep(
                window
                    .pre
                    .iter()
                    .map(|&k| frame.panel.at(d, window.calendar(k)))
                    .collect(),
            )
        })
        .collect();
    (x, columns)
}

pub(crate) fn fit_target(
    frame: &StudyFrame,
    target: &Target,
    demean: bool,
    settings: SolverSettings,
) -> Result<WeightVector> {
    let donors = donor_pool(frame, target)?;
    if frame.window_for(target.adoption).pre_len() == 0 {
        return Err(Error::NoPrePeriod(format!("focal `{}`", target.label)));
    }
    let (x, columns) = fit_data(frame, target, &donors, demean);
    let problem = SimplexLsProblem::new(x, columns)?.with_settings(settings);
    let fit = solve_simplex_ls(&problem);
    Ok(WeightVector {
        donors: donors
            .iter()
            .map(|&d| frame.panel.units()[d].clone())
            .collect(),
        weights: fit.weights,
        objective_value: fit.objective,
        iterations_used: fit.iterations,
        converged: fit.converged,
    })
}

fn weights_on_pool(
    frame: &StudyFrame,
    target: &Target,
    weights: &WeightVector,
) -> Result<Vec<(usize, f64)>> {
    let pool = donor_pool(frame, target)?;
    weights
        .iter()
        .map(|(name, w)| {
            frame
                .panel
                .unit_index(name)
                .filter(|i| pool.contains(i))
                .map(|i| (i, w))
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "weight on `{name}`, which is not a donor of `{}`",
                        target.label
                    ))
                })
        })
        .collect()
}

/// Builds the effect series of `target` for `estimator` with the given donor
/// weights (uniform for DiD).
pub(crate) fn series_with_weights(
    frame: &StudyFrame,
    target: &Target,
    estimator: Estimator,
    weights: WeightVector,
) -> Result<EffectSeries> {
    let donors = weights_on_pool(frame, target, &weights)?;
    let window = frame.window_for(target.adoption);
    let comparison = Comparison::build(
        &frame.panel,
        window,
        estimator.reference(),
        &target.shares(),
        &donors,
    );
    let by_event_time = comparison.effects(&frame.panel);
    let bias = if estimator == Estimator::FeAscm {
        let level_gap = comparison
            .treated
            .iter()
            .map(|m| m.weight * m.reference)
            .sum::<f64>()
            - comparison
                .donors
                .iter()
                .map(|m| m.weight * m.reference)
                .sum::<f64>();
        by_event_time.keys().map(|&k| (k, level_gap)).collect()
    } else {
        BTreeMap::new()
    };
    let mut series = EffectSeries {
        focal: target.label.clone(),
        estimator,
        by_event_time,
        donor_weights: Some(weights),
        rmspe: None,
        bias,
        design: vec![Component {
            coefficient: 1.0,
            comparison,
        }],
    };
    series.rmspe = rmspe(&series).ok();
    Ok(series)
}

/// Fits (where needed) and evaluates `estimator` for `target`.
pub(crate) fn estimate_target(
    frame: &StudyFrame,
    target: &Target,
    estimator: Estimator,
    settings: SolverSettings,
) -> Result<EffectSeries> {
    let weights = match estimator {
        Estimator::Did => {
            let pool = donor_pool(frame, target)?;
            WeightVector::uniform(
                pool.iter()
                    .map(|&d| frame.panel.units()[d].clone())
                    .collect(),
            )
        }
        Estimator::Scm => fit_target(frame, target, false, settings)?,
        Estimator::FeAscm => fit_target(frame, target, true, settings)?,
    };
    series_with_weights(frame, target, estimator, weights)
}

/// Per-focal estimate with default solver settings.
pub fn estimate(frame: &StudyFrame, focal: &str, estimator: Estimator) -> Result<EffectSeries> {
    estimate_target(
        frame,
        &Target::unit(frame, focal)?,
        estimator,
        SolverSettings::default(),
    )
}

/// Means of a two-by-two difference-in-differences comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoByTwoTable {
    pub donor_pre: f64,
    pub donor_post: f64,
    pub focal_pre: f64,
    pub focal_post: f64,
    pub did_estimate: f64,
}

impl TwoByTwoTable {
    pub fn from_means(donor_pre: f64, donor_post: f64, focal_pre: f64, focal_post: f64) -> Self {
        TwoByTwoTable {
            donor_pre,
            donor_post,
            focal_pre,
            focal_post,
            did_estimate: (focal_post - focal_pre) - (donor_post - donor_pre),
        }
    }

    pub fn donor_change(&self) -> f64 {
        self.donor_post - self.donor_pre
    }

    pub fn focal_change(&self) -> f64 {
        self.focal_post - self.focal_pre
    }

    pub fn pre_difference(&self) -> f64 {
        self.focal_pre - self.donor_pre
    }

    pub fn post_difference(&self) -> f64 {
        self.focal_post - self.donor_post
    }
}

/// Pre/post means for the focal unit and the uniform donor average.
pub fn did_two_by_two(frame: &StudyFrame, focal: &str) -> Result<TwoByTwoTable> {
    let target = Target::unit(frame, focal)?;
    let donors = donor_pool(frame, &target)?;
    let window = frame.window_for(target.adoption);
    let panel = &frame.panel;
    let me = target.members[0];
    let donor_avg = |t: i64| donors.iter().map(|&d| panel.at(d, t)).sum::<f64>() / donors.len() as f64;
    let mean_over = |ks: &[i64], f: &dyn Fn(i64) -> f64| {
        ks.iter().map(|&k| f(window.calendar(k))).sum::<f64>() / ks.len() as f64
    };
    if window.pre.is_empty() {
        return Err(Error::NoPrePeriod(format!("focal `{focal}`")));
    }
    Ok(TwoByTwoTable::from_means(
        mean_over(&window.pre, &donor_avg),
        mean_over(&window.post, &donor_avg),
        mean_over(&window.pre, &|t| panel.at(me, t)),
        mean_over(&window.post, &|t| panel.at(me, t)),
    ))
}

/// Event-study DiD against the uniform donor average, referenced to `T − 1`.
pub fn did_event_study(frame: &StudyFrame, focal: &str) -> Result<EffectSeries> {
    estimate(frame, focal, Estimator::Did)
}

/// Synthetic control weights on raw (`demean = false`) or unit-demeaned
/// pre-period outcomes.
pub fn scm_fit(frame: &StudyFrame, focal: &str, demean: bool) -> Result<WeightVector> {
    fit_target(
        frame,
        &Target::unit(frame, focal)?,
        demean,
        SolverSettings::default(),
    )
}

/// Gap between the focal outcome and its synthetic control at every event time.
pub fn scm_effects(frame: &StudyFrame, focal: &str, weights: &WeightVector) -> Result<EffectSeries> {
    series_with_weights(
        frame,
        &Target::unit(frame, focal)?,
        Estimator::Scm,
        weights.clone(),
    )
}

/// Fixed-effects augmented synthetic control: demeaned fit, then the
/// pre-period-averaged weighted difference in differences.
pub fn fe_ascm_effects(frame: &StudyFrame, focal: &str) -> Result<EffectSeries> {
    estimate(frame, focal, Estimator::FeAscm)
}

/// Fixed-effects augmented estimate with caller-supplied weights.
pub fn fe_ascm_effects_with(
    frame: &StudyFrame,
    focal: &str,
    weights: &WeightVector,
) -> Result<EffectSeries> {
    series_with_weights(
        frame,
        &Target::unit(frame, focal)?,
        Estimator::FeAscm,
        weights.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{apply_inclusion_filter, Adoption, TreatmentSchedule};

    fn frame_from(rows: Vec<Vec<f64>>, names: &[&str], adoptions: &[Adoption], k: usize, min_pre: usize) -> StudyFrame {
        let panel = Panel::new(names.iter().map(|s| s.to_string()).collect(), 1, rows).unwrap();
        let schedule: TreatmentSchedule = names.iter().copied().zip(adoptions.iter().copied()).collect();
        apply_inclusion_filter(panel, schedule, k, min_pre).unwrap()
    }

    #[test]
    fn table_one_arithmetic() {
        let t = TwoByTwoTable::from_means(616.95, 417.25, 431.88, 326.19);
        assert!((t.did_estimate - 94.01).abs() < 1e-9);
        assert!((t.donor_change() + 199.7).abs() < 1e-9);
        assert!((t.focal_change() + 105.69).abs() < 1e-9);
        assert!((t.pre_difference() + 185.07).abs() < 1e-9);
        assert!((t.post_difference() + 91.06).abs() < 1e-9);
    }

    #[test]
    fn toy_two_by_two() {
        // Focal (10, 10 | 20), donor (10, 10 | 15): estimate 5.
        let frame = frame_from(
            vec![vec![10.0, 10.0, 20.0], vec![10.0, 10.0, 15.0]],
            &["F", "D"],
            &[Adoption::At(3), Adoption::Never],
            0,
            2,
        );
        let t = did_two_by_two(&frame, "F").unwrap();
        assert_eq!(t.did_estimate, 5.0);
        let expected = (t.focal_post - t.focal_pre) - (t.donor_post - t.donor_pre);
        assert!((t.did_estimate - expected).abs() <= 1e-12);
    }

    #[test]
    fn identical_series_give_zero_two_by_two() {
        let row = vec![3.0, 5.0, 4.0, 8.0, 9.0];
        let frame = frame_from(
            vec![row.clone(), row.clone(), row],
            &["F", "A", "B"],
            &[Adoption::At(4), Adoption::Never, Adoption::Never],
            1,
            2,
        );
        assert_eq!(did_two_by_two(&frame, "F").unwrap().did_estimate, 0.0);
    }

    #[test]
    fn event_study_hand_values() {
        // Periods 1..=5, focal F adopts at 4, K = 1. Donors A, B.
        let frame = frame_from(
            vec![
                vec![1.0, 2.0, 4.0, 9.0, 11.0],
                vec![2.0, 2.0, 3.0, 4.0, 6.0],
                vec![0.0, 1.0, 1.0, 2.0, 1.0],
            ],
            &["F", "A", "B"],
            &[Adoption::At(4), Adoption::Never, Adoption::Never],
            1,
            3,
        );
        let s = did_event_study(&frame, "F").unwrap();
        // k=-2 (t=2): (2-4) - ((2-3)+(1-1))/2 = -2 + 0.5 = -1.5
        // k=0 (t=4): (9-4) - ((4-3)+(2-1))/2 = 5 - 1 = 4
        // k=1 (t=5): (11-4) - ((6-3)+(1-1))/2 = 7 - 1.5 = 5.5
        assert_eq!(s.get(-2), Some(-1.5));
        assert_eq!(s.get(-1), Some(0.0));
        assert_eq!(s.get(0), Some(4.0));
        assert_eq!(s.get(1), Some(5.5));
        // RMSPE skips k=-1: gaps at k=-3 and k=-2.
        // k=-3 (t=1): (1-4) - ((2-3)+(0-1))/2 = -3 + 1 = -2
        let expected = ((4.0 + 2.25) / 2.0f64).sqrt();
        assert!((s.rmspe.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn level_shift_cancels_in_event_study() {
        let donors = vec![vec![1.0, 3.0, 2.0, 5.0, 4.0, 6.0], vec![2.0, 1.0, 4.0, 3.0, 7.0, 5.0]];
        let focal: Vec<f64> = (0..6).map(|t| (donors[0][t] + donors[1][t]) / 2.0 + 17.0).collect();
        let frame = frame_from(
            vec![focal, donors[0].clone(), donors[1].clone()],
            &["F", "A", "B"],
            &[Adoption::At(4), Adoption::Never, Adoption::Never],
            2,
            3,
        );
        let s = did_event_study(&frame, "F").unwrap();
        assert!(s.by_event_time.values().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn demeaned_fit_absorbs_constant_offset() {
        let a = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let b = vec![2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0];
        let focal: Vec<f64> = a.iter().map(|v| v + 50.0).collect();
        let frame = frame_from(
            vec![focal, a, b],
            &["F", "A", "B"],
            &[Adoption::At(6), Adoption::Never, Adoption::Never],
            1,
            4,
        );
        let demeaned = scm_fit(&frame, "F", true).unwrap();
        assert!((demeaned.get("A") - 1.0).abs() < 1e-8);
        assert!(demeaned.objective_value < 1e-14);
        let raw = scm_fit(&frame, "F", false).unwrap();
        assert!(raw.objective_value > 1.0);
        // The objective agrees with direct evaluation.
        let series = fe_ascm_effects(&frame, "F").unwrap();
        assert!(series.rmspe.unwrap() < 1e-7);
    }

    #[test]
    fn fe_ascm_hand_values() {
        // Periods 1..=3, adoption 3 (L = 2), K = 0, donors A and B with
        // weights 0.25 / 0.75 supplied directly.
        let frame = frame_from(
            vec![vec![4.0, 6.0, 12.0], vec![1.0, 3.0, 5.0], vec![2.0, 2.0, 6.0]],
            &["F", "A", "B"],
            &[Adoption::At(3), Adoption::Never, Adoption::Never],
            0,
            2,
        );
        let w = WeightVector {
            donors: vec!["A".into(), "B".into()],
            weights: vec![0.25, 0.75],
            objective_value: f64::NAN,
            iterations_used: 0,
            converged: true,
        };
        let s = fe_ascm_effects_with(&frame, "F", &w).unwrap();
        // ℓ=1: (12-6) - [0.25(5-3) + 0.75(6-2)] = 6 - 3.5 = 2.5
        // ℓ=2: (12-4) - [0.25(5-1) + 0.75(6-2)] = 8 - 4 = 4
        assert!((s.get(0).unwrap() - 3.25).abs() < 1e-12);
        // Bias = SCM gap minus FE-ASCM gap with the same weights.
        let scm = scm_effects(&frame, "F", &w).unwrap();
        assert!((scm.get(0).unwrap() - s.get(0).unwrap() - s.bias[&0]).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_recover_averaged_did() {
        let rows = vec![
            vec![5.0, 7.0, 6.0, 9.0, 12.0, 13.0],
            vec![1.0, 2.0, 2.5, 3.0, 4.0, 4.5],
            vec![3.0, 2.0, 4.0, 6.0, 5.0, 8.0],
            vec![0.0, 1.0, 0.0, 2.0, 1.0, 3.0],
        ];
        let frame = frame_from(
            rows.clone(),
            &["F", "A", "B", "C"],
            &[Adoption::At(5), Adoption::Never, Adoption::Never, Adoption::Never],
            1,
            4,
        );
        let uniform = WeightVector::uniform(vec!["A".into(), "B".into(), "C".into()]);
        let s = fe_ascm_effects_with(&frame, "F", &uniform).unwrap();
        for k in [0i64, 1] {
            let t = (4 + k) as usize; // row offset of T + k
            let mut acc = 0.0;
            for l in 1..=4usize {
                let pre = 4 - l;
                let focal = rows[0][t] - rows[0][pre];
                let donor = (1..4).map(|d| rows[d][t] - rows[d][pre]).sum::<f64>() / 3.0;
                acc += focal - donor;
            }
            assert!((s.get(k).unwrap() - acc / 4.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rmspe_examples() {
        let zero = EffectSeries::from_values(
            "x",
            Estimator::Scm,
            [(-2, 0.0), (-1, 0.0), (0, 3.0)].into_iter().collect(),
        );
        assert_eq!(rmspe(&zero).unwrap(), 0.0);
        let s = EffectSeries::from_values("x", Estimator::Scm, [(-2, 3.0), (-1, 4.0)].into_iter().collect());
        assert!((rmspe(&s).unwrap() - 3.5355339059327378).abs() < 1e-12);
        let none = EffectSeries::from_values("x", Estimator::Scm, [(0, 1.0)].into_iter().collect());
        assert!(matches!(rmspe(&none), Err(Error::NoPrePeriod(_))));
        let did = EffectSeries::from_values("x", Estimator::Did, [(-1, 0.0), (0, 2.0)].into_iter().collect());
        assert!(rmspe(&did).is_err());
    }

    #[test]
    fn foreign_weights_are_rejected() {
        let frame = frame_from(
            vec![vec![1.0; 6], vec![2.0; 6], vec![3.0; 6]],
            &["F", "A", "B"],
            &[Adoption::At(5), Adoption::Never, Adoption::At(6)],
            2,
            2,
        );
        let w = WeightVector::uniform(vec!["A".into(), "B".into()]);
        assert!(matches!(scm_effects(&frame, "F", &w), Err(Error::Validation(_))));
    }
}
