//! Panel data model: outcome matrix, adoption timing, inclusion filtering,
//! donor sets and event-time windows.
//!
//! A [`Panel`] is a dense unit × period matrix with an observation mask.
//! Periods are consecutive integers (one step per period). A
//! [`TreatmentSchedule`] records when each unit adopts the policy, and
//! [`apply_inclusion_filter`] turns the pair into a [`StudyFrame`]: the set of
//! focal (evaluable treated) units together with the post horizon `K` used to
//! define donor pools.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adoption time of a unit. `Never` sorts after every finite period, so a
/// donor-eligibility test is a plain comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adoption {
    At(i64),
    Never,
}

impl Adoption {
    pub fn period(self) -> Option<i64> {
        match self {
            Adoption::At(t) => Some(t),
            Adoption::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, Adoption::Never)
    }

    fn shifted_earlier(self, by: i64) -> Adoption {
        match self {
            Adoption::At(t) => Adoption::At(t - by),
            Adoption::Never => Adoption::Never,
        }
    }
}

impl std::fmt::Display for Adoption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Adoption::At(t) => write!(f, "{t}"),
            Adoption::Never => f.write_str("never"),
        }
    }
}

/// Rectangular unit × period outcome matrix.
///
/// Unobserved cells hold `NaN` and are `false` in the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    units: Vec<String>,
    times: Vec<i64>,
    values: Vec<f64>,
    observed: Vec<bool>,
    index: HashMap<String, usize>,
}

impl Panel {
    /// Fully observed panel; `rows[u][t]` is the outcome of unit `u` in period
    /// `first_time + t`.
    pub fn new(units: Vec<String>, first_time: i64, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mask = rows.iter().map(|r| vec![true; r.len()]).collect();
        Self::with_mask(units, first_time, rows, mask)
    }

    pub fn with_mask(
        units: Vec<String>,
        first_time: i64,
        rows: Vec<Vec<f64>>,
        observed: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Empty("panel has no units"));
        }
        if rows.len() != units.len() || observed.len() != units.len() {
            return Err(Error::Validation(format!(
                "panel has {} units but {} outcome rows and {} mask rows",
                units.len(),
                rows.len(),
                observed.len()
            )));
        }
        let n_times = rows[0].len();
        if n_times == 0 {
            return Err(Error::Empty("panel has no periods"));
        }
        let mut values = Vec::with_capacity(units.len() * n_times);
        let mut mask = Vec::with_capacity(units.len() * n_times);
        for ((unit, row), obs) in units.iter().zip(&rows).zip(&observed) {
            if row.len() != n_times || obs.len() != n_times {
                return Err(Error::Validation(format!(
                    "unit `{unit}` has {} outcomes and {} mask entries, expected {n_times}",
                    row.len(),
                    obs.len()
                )));
            }
            for (t, (&y, &o)) in row.iter().zip(obs).enumerate() {
                if o && !y.is_finite() {
                    return Err(Error::Validation(format!(
                        "unit `{unit}` period {} is marked observed but is not finite",
                        first_time + t as i64
                    )));
                }
                values.push(if o { y } else { f64::NAN });
                mask.push(o);
            }
        }
        let times = (0..n_times as i64).map(|t| first_time + t).collect();
        Self::from_parts(units, times, values, mask)
    }

    fn from_parts(
        units: Vec<String>,
        times: Vec<i64>,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(units.len());
        for (i, u) in units.iter().enumerate() {
            if index.insert(u.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate unit identifier `{u}`")));
            }
        }
        Ok(Panel {
            units,
            times,
            values,
            observed,
            index,
        })
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn first_time(&self) -> i64 {
        self.times[0]
    }

    pub fn last_time(&self) -> i64 {
        self.times[self.times.len() - 1]
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.index.get(unit).copied()
    }

    pub fn time_index(&self, time: i64) -> Option<usize> {
        let offset = time - self.first_time();
        (offset >= 0 && (offset as usize) < self.times.len()).then_some(offset as usize)
    }

    /// Outcome of unit `u` (by index) at calendar period `time`, if observed.
    pub fn value(&self, u: usize, time: i64) -> Option<f64> {
        let t = self.time_index(time)?;
        let cell = u * self.times.len() + t;
        self.observed[cell].then(|| self.values[cell])
    }

    /// Like [`Panel::value`] but for cells already known to be observed.
    pub(crate) fn at(&self, u: usize, time: i64) -> f64 {
        let t = (time - self.first_time()) as usize;
        self.values[u * self.times.len() + t]
    }

    pub fn is_observed(&self, u: usize, time: i64) -> bool {
        self.time_index(time)
            .map(|t| self.observed[u * self.times.len() + t])
            .unwrap_or(false)
    }

    /// Outcome row of unit `u`; unobserved cells are `NaN`.
    pub fn row(&self, u: usize) -> &[f64] {
        let n = self.times.len();
        &self.values[u * n..(u + 1) * n]
    }

    pub fn mask_row(&self, u: usize) -> &[bool] {
        let n = self.times.len();
        &self.observed[u * n..(u + 1) * n]
    }

    /// True when unit `u` is observed at every period of `from..=to`.
    pub fn observed_over(&self, u: usize, from: i64, to: i64) -> bool {
        (from..=to).all(|t| self.is_observed(u, t))
    }

    fn keep_units(&self, keep: &[usize]) -> Panel {
        let n = self.times.len();
        let mut values = Vec::with_capacity(keep.len() * n);
        let mut observed = Vec::with_capacity(keep.len() * n);
        for &u in keep {
            values.extend_from_slice(self.row(u));
            observed.extend_from_slice(self.mask_row(u));
        }
        let units = keep.iter().map(|&u| self.units[u].clone()).collect();
        Panel::from_parts(units, self.times.clone(), values, observed)
            .expect("subset of a valid panel is valid")
    }

    /// Copy of the panel with `mask(unit, time)` cells hidden.
    pub(crate) fn hide_cells(&self, mut hide: impl FnMut(usize, i64) -> bool) -> Panel {
        let mut out = self.clone();
        let n = self.times.len();
        for u in 0..self.units.len() {
            for (t, &time) in self.times.iter().enumerate() {
                if hide(u, time) {
                    out.observed[u * n + t] = false;
                    out.values[u * n + t] = f64::NAN;
                }
            }
        }
        out
    }

    fn map_observed(&self, f: impl Fn(f64) -> f64) -> Panel {
        let mut out = self.clone();
        for (v, &o) in out.values.iter_mut().zip(&self.observed) {
            if o {
                *v = f(*v);
            }
        }
        out
    }
}

/// Adoption time for every unit of a panel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentSchedule {
    adoption: BTreeMap<String, Adoption>,
}

impl TreatmentSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, unit: impl Into<String>, adoption: Adoption) -> Option<Adoption> {
        self.adoption.insert(unit.into(), adoption)
    }

    pub fn get(&self, unit: &str) -> Option<Adoption> {
        self.adoption.get(unit).copied()
    }

    pub fn len(&self) -> usize {
        self.adoption.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adoption.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Adoption)> {
        self.adoption.iter().map(|(u, a)| (u.as_str(), *a))
    }
}

impl<S: Into<String>> FromIterator<(S, Adoption)> for TreatmentSchedule {
    fn from_iter<I: IntoIterator<Item = (S, Adoption)>>(iter: I) -> Self {
        TreatmentSchedule {
            adoption: iter.into_iter().map(|(u, a)| (u.into(), a)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Adopted at or before the first panel period; dropped from the panel.
    AdoptedBeforeWindow { adoption: i64 },
    /// Too few pre-treatment periods to be a focal unit; still a donor candidate.
    TooFewPrePeriods { available: usize, required: usize },
    /// Unobserved outcomes inside the focal unit's own window.
    MissingOutcomes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub unit: String,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

impl Exclusion {
    /// Whether the unit stays in the panel as a potential donor.
    pub fn retained_as_donor(&self) -> bool {
        !matches!(self.reason, ExclusionReason::AdoptedBeforeWindow { .. })
    }
}

/// Filtered panel, schedule and the focal units that can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyFrame {
    pub panel: Panel,
    pub schedule: TreatmentSchedule,
    pub post_horizon: usize,
    pub min_pre_periods: usize,
    /// Focal units in panel order.
    pub treated_units: Vec<String>,
    /// Number of pre-treatment periods `L_j` per focal unit.
    pub pre_period_counts: BTreeMap<String, usize>,
    pub exclusions: Vec<Exclusion>,
}

/// Pre-period (`-L..=-1`) and post-period (`0..=K_eff`) event times of one focal unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWindow {
    pub adoption: i64,
    pub pre: Vec<i64>,
    pub post: Vec<i64>,
}

impl EventWindow {
    fn new(adoption: i64, pre_len: usize, post_len: usize) -> Self {
        EventWindow {
            adoption,
            pre: (-(pre_len as i64)..0).collect(),
            post: (0..post_len as i64).collect(),
        }
    }

    pub fn event_times(&self) -> impl Iterator<Item = i64> + '_ {
        self.pre.iter().chain(&self.post).copied()
    }

    pub fn calendar(&self, k: i64) -> i64 {
        self.adoption + k
    }

    pub fn pre_len(&self) -> usize {
        self.pre.len()
    }

    pub fn post_len(&self) -> usize {
        self.post.len()
    }

    pub fn first_period(&self) -> i64 {
        self.adoption - self.pre.len() as i64
    }

    pub fn last_period(&self) -> i64 {
        self.adoption + self.post.len() as i64 - 1
    }
}

/// Builds a [`StudyFrame`].
///
/// Units that adopted at or before the first panel period are removed from
/// the panel entirely. Units with fewer than `min_pre_periods` pre-periods, or
/// with unobserved outcomes inside their own window, are excluded as focal
/// units but kept as donor candidates. Units adopting after the last panel
/// period are untreated within the window.
pub fn apply_inclusion_filter(
    panel: Panel,
    schedule: TreatmentSchedule,
    post_horizon: usize,
    min_pre_periods: usize,
) -> Result<StudyFrame> {
    if min_pre_periods == 0 {
        return Err(Error::Validation("min_pre_periods must be at least 1".into()));
    }
    for (unit, _) in schedule.iter() {
        if panel.unit_index(unit).is_none() {
            return Err(Error::Validation(format!(
                "schedule references unit `{unit}` which is not in the panel"
            )));
        }
    }
    let first = panel.first_time();
    let last = panel.last_time();

    let mut exclusions = Vec::new();
    let mut keep = Vec::with_capacity(panel.n_units());
    for (u, unit) in panel.units().iter().enumerate() {
        let adoption = schedule.get(unit).ok_or_else(|| {
            Error::Validation(format!("schedule has no adoption entry for unit `{unit}`"))
        })?;
        match adoption {
            Adoption::At(t) if t <= first => exclusions.push(Exclusion {
                unit: unit.clone(),
                reason: ExclusionReason::AdoptedBeforeWindow { adoption: t },
            }),
            _ => keep.push(u),
        }
    }
    let panel = if keep.len() == panel.n_units() {
        panel
    } else {
        panel.keep_units(&keep)
    };
    let schedule: TreatmentSchedule = panel
        .units()
        .iter()
        .map(|u| (u.clone(), schedule.get(u).expect("checked above")))
        .collect();

    let mut treated_units = Vec::new();
    let mut pre_period_counts = BTreeMap::new();
    for (u, unit) in panel.units().iter().enumerate() {
        let Adoption::At(t) = schedule.get(unit).expect("present") else {
            continue;
        };
        if t > last {
            continue;
        }
        let available = (t - first) as usize;
        if available < min_pre_periods {
            exclusions.push(Exclusion {
                unit: unit.clone(),
                reason: ExclusionReason::TooFewPrePeriods {
                    available,
                    required: min_pre_periods,
                },
            });
            continue;
        }
        let eval_end = (t + post_horizon as i64).min(last);
        if !panel.observed_over(u, first, eval_end) {
            exclusions.push(Exclusion {
                unit: unit.clone(),
                reason: ExclusionReason::MissingOutcomes,
            });
            continue;
        }
        treated_units.push(unit.clone());
        pre_period_counts.insert(unit.clone(), available);
    }
    if treated_units.is_empty() {
        return Err(Error::NoEvaluableTreatedUnits);
    }
    Ok(StudyFrame {
        panel,
        schedule,
        post_horizon,
        min_pre_periods,
        treated_units,
        pre_period_counts,
        exclusions,
    })
}

impl StudyFrame {
    pub fn adoption(&self, unit: &str) -> Option<Adoption> {
        self.schedule.get(unit)
    }

    pub fn is_treated(&self, unit: &str) -> bool {
        self.pre_period_counts.contains_key(unit)
    }

    pub(crate) fn focal_adoption(&self, focal: &str) -> Result<i64> {
        if !self.is_treated(focal) {
            return Err(Error::NotTreated(focal.to_string()));
        }
        Ok(self
            .adoption(focal)
            .and_then(Adoption::period)
            .expect("treated units have finite adoption"))
    }

    /// Focal units grouped by adoption period, in ascending period order.
    pub fn cohorts(&self) -> BTreeMap<i64, Vec<String>> {
        let mut out: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        for unit in &self.treated_units {
            let t = self.adoption(unit).and_then(Adoption::period).expect("treated");
            out.entry(t).or_default().push(unit.clone());
        }
        out
    }

    /// Event window shared by every unit adopting at `adoption`.
    pub fn window_for(&self, adoption: i64) -> EventWindow {
        let pre = (adoption - self.panel.first_time()).max(0) as usize;
        let post_end = (adoption + self.post_horizon as i64).min(self.panel.last_time());
        let post = (post_end - adoption + 1).max(0) as usize;
        EventWindow::new(adoption, pre, post)
    }

    /// Donor indices for a focal adopting at `adoption`, excluding `skip`.
    pub(crate) fn donor_indices_for(&self, adoption: i64, skip: &[usize]) -> Vec<usize> {
        let threshold = Adoption::At(adoption + self.post_horizon as i64 + 1);
        let window = self.window_for(adoption);
        let (from, to) = (self.panel.first_time(), window.last_period());
        self.panel
            .units()
            .iter()
            .enumerate()
            .filter(|(i, unit)| {
                !skip.contains(i)
                    && self.adoption(unit).expect("schedule covers panel") >= threshold
                    && self.panel.observed_over(*i, from, to)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Same frame with the focal set narrowed to `keep` (other focal units
    /// stay in the panel as ordinary units).
    pub fn restrict_focal(&self, keep: &[String]) -> Result<StudyFrame> {
        let mut out = self.clone();
        out.treated_units.retain(|u| keep.contains(u));
        out.pre_period_counts.retain(|u, _| keep.contains(u));
        if out.treated_units.is_empty() {
            return Err(Error::NoEvaluableTreatedUnits);
        }
        Ok(out)
    }

    /// Frame in which every finite adoption time is moved `shift` periods
    /// earlier, the post horizon covers exactly the `shift` fabricated
    /// post-periods, and every cell at or after a unit's true adoption is
    /// hidden. Focal units are the focal units of `self`.
    pub(crate) fn shifted_earlier(&self, shift: usize) -> Result<StudyFrame> {
        let by = shift as i64;
        let hidden = self.panel.hide_cells(|u, time| {
            match self.adoption(&self.panel.units()[u]) {
                Some(Adoption::At(t)) => time >= t,
                _ => false,
            }
        });
        let schedule: TreatmentSchedule = self
            .schedule
            .iter()
            .map(|(u, a)| (u.to_string(), a.shifted_earlier(by)))
            .collect();
        let shifted = apply_inclusion_filter(hidden, schedule, shift - 1, 1)?;
        shifted.restrict_focal(&self.treated_units)
    }
}

/// Donors of `focal`: units other than the focal unit whose adoption is at
/// least `K + 1` periods after the focal adoption (never-treated units always
/// qualify), in panel order. Donors with unobserved outcomes anywhere between
/// the first panel period and the focal unit's last evaluated period are
/// left out.
pub fn donor_set(frame: &StudyFrame, focal: &str) -> Result<Vec<String>> {
    let adoption = frame.focal_adoption(focal)?;
    let me = frame.panel.unit_index(focal).expect("focal is in panel");
    let donors = frame.donor_indices_for(adoption, &[me]);
    if donors.is_empty() {
        return Err(Error::NoValidDonors {
            focal: focal.to_string(),
            horizon: frame.post_horizon,
        });
    }
    Ok(donors
        .into_iter()
        .map(|i| frame.panel.units()[i].clone())
        .collect())
}

/// Pre event times `-L_j..=-1` and post event times `0..=min(K, last - T_j)`.
pub fn event_window(frame: &StudyFrame, focal: &str) -> Result<EventWindow> {
    let adoption = frame.focal_adoption(focal)?;
    Ok(frame.window_for(adoption))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    #[serde(alias = "natural_log", alias = "ln")]
    Log,
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" | "level" => Ok(Transform::Identity),
            "log" | "ln" | "natural_log" | "natural-log" => Ok(Transform::Log),
            other => Err(Error::Validation(format!("unknown transform `{other}`"))),
        }
    }
}

/// Applies `transform` to every observed cell; the mask is preserved.
pub fn transform_outcome(panel: &Panel, transform: Transform) -> Result<Panel> {
    match transform {
        Transform::Identity => Ok(panel.clone()),
        Transform::Log => {
            let mut bad = Vec::new();
            for u in 0..panel.n_units() {
                for &time in panel.times() {
                    if let Some(y) = panel.value(u, time) {
                        if y <= 0.0 {
                            bad.push((panel.units()[u].clone(), time));
                        }
                    }
                }
            }
            if !bad.is_empty() {
                return Err(Error::NonPositiveOutcome(bad));
            }
            Ok(panel.map_observed(f64::ln))
        }
    }
}

/// Inverse of [`transform_outcome`].
pub fn invert_transform(panel: &Panel, transform: Transform) -> Panel {
    match transform {
        Transform::Identity => panel.clone(),
        Transform::Log => panel.map_observed(f64::exp),
    }
}
