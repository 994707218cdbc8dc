//! Cohort-level estimates, the overall ATT by event time, and partially
//! pooled synthetic controls across adoption cohorts.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    donor_pool, estimate_target, fit_data, fit_target, rmspe, series_with_weights, Component,
    EffectSeries, Estimator, Target, WeightVector,
};
use crate::panel::{StudyFrame, Transform};
use crate::simplex::{mean_squared_residual, minimize_on_simplices, Quadratic, SolverSettings};

/// How a cohort estimate is formed from its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Mean of the members' own estimates.
    AverageOfUnits,
    /// One estimate for the pseudo-unit whose outcome is the members' average.
    #[default]
    CohortAverageTarget,
}

impl FitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMode::AverageOfUnits => "average_of_units",
            FitMode::CohortAverageTarget => "cohort_average_target",
        }
    }
}

impl std::str::FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "average_of_units" | "units" => Ok(FitMode::AverageOfUnits),
            "cohort_average_target" | "cohort" => Ok(FitMode::CohortAverageTarget),
            other => Err(Error::Validation(format!("unknown fit mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortEstimate {
    pub cohort_year: i64,
    pub members: Vec<String>,
    pub effect: EffectSeries,
    pub fit_mode: FitMode,
    /// Members' own series (only for [`FitMode::AverageOfUnits`]).
    pub member_effects: Vec<EffectSeries>,
}

impl CohortEstimate {
    /// `N_s`.
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

pub(crate) fn cohort_label(year: i64) -> String {
    format!("cohort {year}")
}

fn cohort_members(frame: &StudyFrame, cohort_year: i64) -> Result<Vec<String>> {
    frame
        .cohorts()
        .remove(&cohort_year)
        .ok_or_else(|| Error::Validation(format!("no focal units adopt in {cohort_year}")))
}

/// Effect of the policy on the units adopting in `cohort_year`.
pub fn cohort_effects(
    frame: &StudyFrame,
    cohort_year: i64,
    estimator: Estimator,
    fit_mode: FitMode,
) -> Result<CohortEstimate> {
    cohort_effects_with(frame, cohort_year, estimator, fit_mode, SolverSettings::default())
}

pub(crate) fn cohort_effects_with(
    frame: &StudyFrame,
    cohort_year: i64,
    estimator: Estimator,
    fit_mode: FitMode,
    settings: SolverSettings,
) -> Result<CohortEstimate> {
    let members = cohort_members(frame, cohort_year)?;
    let label = cohort_label(cohort_year);
    let (effect, member_effects) = match fit_mode {
        FitMode::CohortAverageTarget => {
            let target = Target::cohort(frame, label.clone(), &members)?;
            let effect = estimate_target(frame, &target, estimator, settings)
                .map_err(|e| e.in_stage("cohort estimation", label.clone()))?;
            (effect, Vec::new())
        }
        FitMode::AverageOfUnits => {
            let each = members
                .iter()
                .map(|unit| {
                    let target = Target::unit(frame, unit)?;
                    estimate_target(frame, &target, estimator, settings)
                        .map_err(|e| e.in_stage("cohort estimation", format!("{label}, unit {unit}")))
                })
                .collect::<Result<Vec<_>>>()?;
            (average_series(label.clone(), estimator, &each), each)
        }
    };
    Ok(CohortEstimate {
        cohort_year,
        members,
        effect,
        fit_mode,
        member_effects,
    })
}

/// Pointwise mean of series that share one event window.
fn average_series(label: String, estimator: Estimator, members: &[EffectSeries]) -> EffectSeries {
    let n = members.len() as f64;
    let mean_of = |get: &dyn Fn(&EffectSeries) -> Option<&BTreeMap<i64, f64>>| -> BTreeMap<i64, f64> {
        let mut out: BTreeMap<i64, f64> = BTreeMap::new();
        for m in members {
            if let Some(map) = get(m) {
                for (k, v) in map {
                    *out.entry(*k).or_insert(0.0) += v;
                }
            }
        }
        out.values_mut().for_each(|v| *v /= n);
        out
    };
    let by_event_time = mean_of(&|m| Some(&m.by_event_time));
    let bias = mean_of(&|m| (!m.bias.is_empty()).then_some(&m.bias));
    let design = members
        .iter()
        .flat_map(|m| {
            m.design.iter().map(|c| Component {
                coefficient: c.coefficient / n,
                comparison: c.comparison.clone(),
            })
        })
        .collect();
    let mut series = EffectSeries {
        focal: label,
        estimator,
        by_event_time,
        donor_weights: None,
        rmspe: None,
        bias,
        design,
    };
    series.rmspe = rmspe(&series).ok();
    series
}

/// Cohort estimates for every adoption cohort of the frame, fitted in parallel.
pub fn all_cohort_effects(
    frame: &StudyFrame,
    estimator: Estimator,
    fit_mode: FitMode,
) -> Result<Vec<CohortEstimate>> {
    let years: Vec<i64> = frame.cohorts().into_keys().collect();
    years
        .par_iter()
        .map(|&year| cohort_effects(frame, year, estimator, fit_mode))
        .collect()
}

/// Scale on which outcomes were estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeScale {
    #[default]
    Level,
    Log,
}

impl From<Transform> for OutcomeScale {
    fn from(t: Transform) -> Self {
        match t {
            Transform::Identity => OutcomeScale::Level,
            Transform::Log => OutcomeScale::Log,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttPoint {
    pub estimate: f64,
    /// Treated units in the cohorts observed at this event time.
    pub n_contributing: usize,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

/// Overall average effect on the treated by event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttResult {
    pub by_event_time: BTreeMap<i64, AttPoint>,
    pub outcome_scale: OutcomeScale,
    /// Cohort estimates the result aggregates.
    pub cohorts: Vec<CohortEstimate>,
}

impl AttResult {
    pub fn estimate(&self, k: i64) -> Option<f64> {
        self.by_event_time.get(&k).map(|p| p.estimate)
    }

    pub fn n_contributing(&self, k: i64) -> usize {
        self.by_event_time.get(&k).map_or(0, |p| p.n_contributing)
    }

    pub fn with_scale(mut self, scale: OutcomeScale) -> Self {
        self.outcome_scale = scale;
        self
    }

    /// ATT as a series, for diagnostics shared with per-unit series.
    pub fn as_series(&self, label: impl Into<String>) -> EffectSeries {
        let estimator = self
            .cohorts
            .first()
            .map_or(Estimator::FeAscm, |c| c.effect.estimator);
        let values = self
            .by_event_time
            .iter()
            .map(|(k, p)| (*k, p.estimate))
            .collect();
        EffectSeries::from_values(label, estimator, values)
    }

    /// Cohorts whose window contains `k`, with their sizes.
    pub fn cohorts_at(&self, k: i64) -> impl Iterator<Item = (&CohortEstimate, f64)> {
        self.cohorts
            .iter()
            .filter_map(move |c| c.effect.get(k).map(|v| (c, v)))
    }
}

/// Cohort-size-weighted average of cohort effects at each event time, over
/// the cohorts observed at that event time.
pub fn overall_att(frame: &StudyFrame, cohort_estimates: &[CohortEstimate]) -> Result<AttResult> {
    if cohort_estimates.is_empty() {
        return Err(Error::Empty("no cohort estimates to aggregate"));
    }
    let mut seen = BTreeSet::new();
    for c in cohort_estimates {
        if c.members.is_empty() {
            return Err(Error::Validation(format!("cohort {} has no members", c.cohort_year)));
        }
        for m in &c.members {
            if frame.adoption(m).and_then(|a| a.period()) != Some(c.cohort_year) {
                return Err(Error::Validation(format!(
                    "`{m}` does not adopt in cohort year {}",
                    c.cohort_year
                )));
            }
            if !seen.insert(m.as_str()) {
                return Err(Error::Validation(format!("`{m}` appears in more than one cohort")));
            }
        }
    }
    if let Some(missing) = frame.treated_units.iter().find(|u| !seen.contains(u.as_str())) {
        return Err(Error::Validation(format!(
            "focal unit `{missing}` is not covered by any cohort"
        )));
    }
    for m in &seen {
        if !frame.is_treated(m) {
            return Err(Error::NotTreated(m.to_string()));
        }
    }

    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for c in cohort_estimates {
        let n = c.size();
        for (k, v) in &c.effect.by_event_time {
            let e = sums.entry(*k).or_insert((0.0, 0));
            e.0 += n as f64 * v;
            e.1 += n;
        }
    }
    let by_event_time = sums
        .into_iter()
        .map(|(k, (sum, n))| {
            (
                k,
                AttPoint {
                    estimate: sum / n as f64,
                    n_contributing: n,
                    ci_lower: None,
                    ci_upper: None,
                },
            )
        })
        .collect();
    Ok(AttResult {
        by_event_time,
        outcome_scale: OutcomeScale::Level,
        cohorts: cohort_estimates.to_vec(),
    })
}

/// Joint simplex least-squares problem across cohorts.
///
/// With residuals `r_s = x_s − D_s w_s` over each cohort's pre-period, and
/// `r̃_s(ℓ)` the residual at event time `−ℓ` for `ℓ = 1..L_min`,
///
/// ```text
/// F(w) = ν · (1/L_min) Σ_ℓ (Σ_s (N_s/N) r̃_s(ℓ))²
///      + (1 − ν) · (1/S) Σ_s (1/L_s) ‖r_s‖²
/// ```
///
/// minimized with every `w_s` on its own donor simplex.
#[derive(Debug, Clone)]
pub struct PoolingProblem {
    cohort_years: Vec<i64>,
    targets: Vec<Vec<f64>>,
    columns: Vec<Vec<Vec<f64>>>,
    donors: Vec<Vec<String>>,
    shares: Vec<f64>,
    l_min: usize,
}

impl PoolingProblem {
    /// `demean` fits unit-demeaned pre-period outcomes as FE-ASCM does.
    pub fn new(frame: &StudyFrame, cohort_years: &[i64], demean: bool) -> Result<Self> {
        if cohort_years.is_empty() {
            return Err(Error::Empty("no cohorts to pool"));
        }
        let all = frame.cohorts();
        let mut targets = Vec::new();
        let mut columns = Vec::new();
        let mut donors = Vec::new();
        let mut sizes = Vec::new();
        for &year in cohort_years {
            let members = all
                .get(&year)
                .ok_or_else(|| Error::Validation(format!("no focal units adopt in {year}")))?;
            let target = Target::cohort(frame, cohort_label(year), members)?;
            let pool = donor_pool(frame, &target)?;
            if frame.window_for(year).pre_len() == 0 {
                return Err(Error::NoPrePeriod(cohort_label(year)));
            }
            let (x, d) = fit_data(frame, &target, &pool, demean);
            targets.push(x);
            columns.push(d);
            donors.push(pool.iter().map(|&i| frame.panel.units()[i].clone()).collect());
            sizes.push(members.len() as f64);
        }
        let total: f64 = sizes.iter().sum();
        let l_min = targets.iter().map(Vec::len).min().expect("non-empty");
        Ok(PoolingProblem {
            cohort_years: cohort_years.to_vec(),
            targets,
            columns,
            donors,
            shares: sizes.iter().map(|n| n / total).collect(),
            l_min,
        })
    }

    pub fn cohort_years(&self) -> &[i64] {
        &self.cohort_years
    }

    /// Number of aligned pre-periods in the pooled term.
    pub fn aligned_pre_periods(&self) -> usize {
        self.l_min
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.columns
            .iter()
            .map(|c| {
                let r = start..start + c.len();
                start = r.end;
                r
            })
            .collect()
    }

    fn residuals(&self, s: usize, w: &[f64]) -> Vec<f64> {
        let x = &self.targets[s];
        (0..x.len())
            .map(|r| x[r] - self.columns[s].iter().zip(w).map(|(c, wi)| wi * c[r]).sum::<f64>())
            .collect()
    }

    /// Pooled term and mean per-cohort term at the given weights.
    pub fn terms(&self, weights: &[WeightVector]) -> (f64, f64) {
        let flat: Vec<f64> = weights.iter().flat_map(|w| w.weights.iter().copied()).collect();
        let obj = PooledObjective { problem: self, nu: 0.0 };
        obj.terms(&flat)
    }

    /// Jointly fitted weights for pooling weight `nu`.
    pub fn solve(&self, nu: f64, settings: SolverSettings, record_trace: bool) -> Result<PooledFit> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::Validation(format!("pooling weight {nu} outside [0, 1]")));
        }
        // Both terms coincide for one cohort, and ν = 0 separates by cohort.
        if nu == 0.0 || self.targets.len() == 1 {
            let mut weights = Vec::new();
            let mut trace = Vec::new();
            for s in 0..self.targets.len() {
                let problem =
                    crate::simplex::SimplexLsProblem::new(self.targets[s].clone(), self.columns[s].clone())?
                        .with_settings(settings);
                let fit = crate::simplex::solve_simplex_ls(&problem);
                weights.push(WeightVector {
                    donors: self.donors[s].clone(),
                    weights: fit.weights,
                    objective_value: fit.objective,
                    iterations_used: fit.iterations,
                    converged: fit.converged,
                });
            }
            let (pooled, cohort) = self.terms(&weights);
            if record_trace {
                trace.push(nu * pooled + (1.0 - nu) * cohort);
            }
            return Ok(PooledFit {
                nu,
                weights,
                objective: nu * pooled + (1.0 - nu) * cohort,
                pooled_term: pooled,
                cohort_term: cohort,
                trace,
            });
        }
        let obj = PooledObjective { problem: self, nu };
        let blocks = self.blocks();
        let out = minimize_on_simplices(&obj, &blocks, settings, record_trace);
        let weights = blocks
            .iter()
            .enumerate()
            .map(|(s, b)| WeightVector {
                donors: self.donors[s].clone(),
                weights: out.x[b.clone()].to_vec(),
                objective_value: mean_squared_residual(&self.targets[s], &self.columns[s], &out.x[b.clone()]),
                iterations_used: out.iterations,
                converged: out.converged,
            })
            .collect();
        let (pooled, cohort) = obj.terms(&out.x);
        Ok(PooledFit {
            nu,
            weights,
            objective: out.value,
            pooled_term: pooled,
            cohort_term: cohort,
            trace: out.trace,
        })
    }
}

/// Result of a partially pooled fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFit {
    pub nu: f64,
    /// One weight vector per cohort, in the order requested.
    pub weights: Vec<WeightVector>,
    pub objective: f64,
    /// Fit of the aligned, size-weighted average of cohort residuals.
    pub pooled_term: f64,
    /// Mean of the per-cohort mean squared residuals.
    pub cohort_term: f64,
    /// Objective after every accepted solver iterate, when requested.
    pub trace: Vec<f64>,
}

impl PooledFit {
    pub fn converged_all(&self) -> bool {
        self.weights.iter().all(|w| w.converged)
    }
}

struct PooledObjective<'a> {
    problem: &'a PoolingProblem,
    nu: f64,
}

impl PooledObjective<'_> {
    fn terms(&self, x: &[f64]) -> (f64, f64) {
        let p = self.problem;
        let mut pooled = vec![0.0; p.l_min];
        let mut cohort = 0.0;
        for (s, b) in p.blocks().into_iter().enumerate() {
            let r = p.residuals(s, &x[b]);
            cohort += r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
            let off = r.len() - p.l_min;
            for (acc, v) in pooled.iter_mut().zip(&r[off..]) {
                *acc += p.shares[s] * v;
            }
        }
        (
            pooled.iter().map(|v| v * v).sum::<f64>() / p.l_min as f64,
            cohort / p.targets.len() as f64,
        )
    }
}

impl Quadratic for PooledObjective<'_> {
    fn dim(&self) -> usize {
        self.problem.columns.iter().map(Vec::len).sum()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.problem;
        let n_cohorts = p.targets.len() as f64;
        let blocks = p.blocks();
        let residuals: Vec<Vec<f64>> = blocks
            .iter()
            .enumerate()
            .map(|(s, b)| p.residuals(s, &x[b.clone()]))
            .collect();
        let mut pooled = vec![0.0; p.l_min];
        for (s, r) in residuals.iter().enumerate() {
            let off = r.len() - p.l_min;
            for (acc, v) in pooled.iter_mut().zip(&r[off..]) {
                *acc += p.shares[s] * v;
            }
        }
        let pooled_value = pooled.iter().map(|v| v * v).sum::<f64>() / p.l_min as f64;
        let mut cohort_value = 0.0;
        for (s, b) in blocks.iter().enumerate() {
            let r = &residuals[s];
            let l = r.len();
            let off = l - p.l_min;
            cohort_value += r.iter().map(|v| v * v).sum::<f64>() / l as f64;
            // Effective residual weight on each row of cohort s.
            let row_weight: Vec<f64> = (0..l)
                .map(|row| {
                    let own = (1.0 - self.nu) * 2.0 / (n_cohorts * l as f64) * r[row];
                    let shared = if row >= off {
                        self.nu * 2.0 / p.l_min as f64 * p.shares[s] * pooled[row - off]
                    } else {
                        0.0
                    };
                    own + shared
                })
                .collect();
            for (g, col) in grad[b.clone()].iter_mut().zip(&p.columns[s]) {
                *g = -col.iter().zip(&row_weight).map(|(c, w)| c * w).sum::<f64>();
            }
        }
        self.nu * pooled_value + (1.0 - self.nu) * cohort_value / n_cohorts
    }

    fn hessian_trace(&self) -> f64 {
        let p = self.problem;
        let n_cohorts = p.targets.len() as f64;
        p.columns
            .iter()
            .enumerate()
            .map(|(s, cols)| {
                let l = p.targets[s].len();
                let off = l - p.l_min;
                let full: f64 = cols.iter().flatten().map(|v| v * v).sum();
                let aligned: f64 = cols.iter().flat_map(|c| &c[off..]).map(|v| v * v).sum();
                (1.0 - self.nu) * 2.0 / (n_cohorts * l as f64) * full
                    + self.nu * 2.0 / p.l_min as f64 * p.shares[s].powi(2) * aligned
            })
            .sum()
    }

    fn data_scale(&self) -> f64 {
        let p = self.problem;
        p.targets
            .iter()
            .flatten()
            .chain(p.columns.iter().flatten().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Per-cohort weights minimizing the partially pooled objective over all
/// cohorts of the frame (`demean` as in FE-ASCM).
pub fn partially_pooled_fit(
    frame: &StudyFrame,
    cohort_years: &[i64],
    pooling_weight: f64,
    demean: bool,
) -> Result<PooledFit> {
    PoolingProblem::new(frame, cohort_years, demean)?.solve(pooling_weight, SolverSettings::default(), false)
}

/// Cohort-average-target estimates for every cohort using partially pooled
/// weights. `estimator` must be SCM or FE-ASCM.
pub fn pooled_cohort_effects(
    frame: &StudyFrame,
    estimator: Estimator,
    pooling_weight: f64,
) -> Result<(Vec<CohortEstimate>, PooledFit)> {
    let demean = match estimator {
        Estimator::Scm => false,
        Estimator::FeAscm => true,
        Estimator::Did => {
            return Err(Error::Validation(
                "partial pooling applies to synthetic control estimators only".into(),
            ))
        }
    };
    let cohorts = frame.cohorts();
    let years: Vec<i64> = cohorts.keys().copied().collect();
    let problem = PoolingProblem::new(frame, &years, demean)
        .map_err(|e| e.in_stage("partial pooling", "all cohorts"))?;
    let fit = problem.solve(pooling_weight, SolverSettings::default(), false)?;
    let estimates = years
        .iter()
        .zip(&fit.weights)
        .map(|(&year, weights)| {
            let members = cohorts[&year].clone();
            let label = cohort_label(year);
            let target = Target::cohort(frame, label.clone(), &members)?;
            let effect = series_with_weights(frame, &target, estimator, weights.clone())
                .map_err(|e| e.in_stage("cohort estimation", label))?;
            Ok(CohortEstimate {
                cohort_year: year,
                members,
                effect,
                fit_mode: FitMode::CohortAverageTarget,
                member_effects: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((estimates, fit))
}

/// Independent cohort-average-target fit for one cohort, for comparison with
/// pooled fits.
pub fn cohort_weights(frame: &StudyFrame, cohort_year: i64, demean: bool) -> Result<WeightVector> {
    let members = cohort_members(frame, cohort_year)?;
    let target = Target::cohort(frame, cohort_label(cohort_year), &members)?;
    fit_target(frame, &target, demean, SolverSettings::default())
}
