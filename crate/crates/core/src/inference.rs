//! Unit-level decomposition of estimates and wild-bootstrap intervals.
//!
//! Every estimate is a weighted sum of comparisons. Within one comparison
//! with synthetic change `c = Σ_i w_i Δ_i`, a treated member `m` with share
//! `s_m` contributes `s_m (Δ_m − c)` and donor `i` contributes
//! `−w_i (Δ_i − c)`. These terms add up to the comparison's effect, and shocks
//! common to every unit cancel inside each of them. A unit's terms are summed
//! over every comparison and role it enters, then scaled by the number of
//! contributing units so the point estimate is their mean.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Component, EffectSeries};
use crate::panel::Panel;
use crate::staggered::AttResult;

/// Signed per-unit terms `ψ_i(k)`, present only for event times at which the
/// unit enters the estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitContribution {
    pub unit: String,
    pub per_event_time: BTreeMap<i64, f64>,
}

/// Point estimate at each event time implied by a set of contributions.
pub fn reconstruct(contributions: &[UnitContribution]) -> BTreeMap<i64, f64> {
    let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for c in contributions {
        for (k, v) in &c.per_event_time {
            let e = acc.entry(*k).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Adds `coefficient ×` the split of one comparison at `k` into `phi`.
fn split_component(panel: &Panel, component: &Component, k: i64, phi: &mut BTreeMap<usize, f64>) {
    let cmp = &component.comparison;
    let a = component.coefficient;
    let synthetic = cmp.synthetic_delta(panel, k);
    for m in &cmp.treated {
        if m.weight != 0.0 {
            *phi.entry(m.unit).or_insert(0.0) += a * m.weight * (cmp.delta(panel, m, k) - synthetic);
        }
    }
    for d in &cmp.donors {
        if d.weight != 0.0 {
            *phi.entry(d.unit).or_insert(0.0) -= a * d.weight * (cmp.delta(panel, d, k) - synthetic);
        }
    }
}

/// Turns per-k additive terms into contributions whose mean is the estimate.
fn finish(panel: &Panel, per_k: BTreeMap<i64, BTreeMap<usize, f64>>) -> Vec<UnitContribution> {
    let mut by_unit: BTreeMap<usize, BTreeMap<i64, f64>> = BTreeMap::new();
    for (k, phi) in per_k {
        let n = phi.len() as f64;
        for (u, v) in phi {
            by_unit.entry(u).or_default().insert(k, n * v);
        }
    }
    by_unit
        .into_iter()
        .map(|(u, per_event_time)| UnitContribution {
            unit: panel.units()[u].clone(),
            per_event_time,
        })
        .collect()
}

/// Contributions to a single focal or cohort series, in panel unit order.
pub fn series_contributions(panel: &Panel, series: &EffectSeries) -> Result<Vec<UnitContribution>> {
    if series.design.is_empty() {
        return Err(Error::MissingDesign(series.focal.clone()));
    }
    let mut per_k: BTreeMap<i64, BTreeMap<usize, f64>> = BTreeMap::new();
    for &k in series.by_event_time.keys() {
        let phi = per_k.entry(k).or_default();
        for component in &series.design {
            split_component(panel, component, k, phi);
        }
    }
    Ok(finish(panel, per_k))
}

/// Contributions to the overall ATT, in panel unit order. A unit that is
/// focal in one comparison and donor in others appears once.
pub fn unit_contributions(panel: &Panel, att: &AttResult) -> Result<Vec<UnitContribution>> {
    if let Some(c) = att.cohorts.iter().find(|c| c.effect.design.is_empty()) {
        return Err(Error::MissingDesign(c.effect.focal.clone()));
    }
    let mut per_k: BTreeMap<i64, BTreeMap<usize, f64>> = BTreeMap::new();
    for (&k, point) in &att.by_event_time {
        let phi = per_k.entry(k).or_default();
        for (cohort, _) in att.cohorts_at(k) {
            let share = cohort.size() as f64 / point.n_contributing as f64;
            for component in &cohort.effect.design {
                let scaled = Component {
                    coefficient: share * component.coefficient,
                    comparison: component.comparison.clone(),
                };
                split_component(panel, &scaled, k, phi);
            }
        }
    }
    Ok(finish(panel, per_k))
}

/// Contributions to the mean of the estimates over `event_times`, stored
/// under event time `key`.
pub fn average_over(
    contributions: &[UnitContribution],
    event_times: &[i64],
    key: i64,
) -> Result<Vec<UnitContribution>> {
    if event_times.is_empty() {
        return Err(Error::Empty("no event times to average"));
    }
    let counts = event_counts(contributions);
    if let Some(k) = event_times.iter().find(|k| !counts.contains_key(k)) {
        return Err(Error::Validation(format!("no estimate at event time {k}")));
    }
    let m = event_times.len() as f64;
    let phi: Vec<(String, f64)> = contributions
        .iter()
        .filter(|c| event_times.iter().any(|k| c.per_event_time.contains_key(k)))
        .map(|c| {
            let sum: f64 = event_times
                .iter()
                .filter_map(|k| c.per_event_time.get(k).map(|v| v / counts[k] as f64))
                .sum();
            (c.unit.clone(), sum / m)
        })
        .collect();
    let n = phi.len() as f64;
    Ok(phi
        .into_iter()
        .map(|(unit, v)| UnitContribution {
            unit,
            per_event_time: [(key, n * v)].into_iter().collect(),
        })
        .collect())
}

fn event_counts(contributions: &[UnitContribution]) -> BTreeMap<i64, usize> {
    let mut counts = BTreeMap::new();
    for c in contributions {
        for k in c.per_event_time.keys() {
            *counts.entry(*k).or_insert(0) += 1;
        }
    }
    counts
}

/// Distribution of the bootstrap multipliers (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    /// ±1 with probability 1/2 each.
    #[default]
    Rademacher,
    /// Two-point law with third moment 1.
    Mammen,
}

impl WeightLaw {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            WeightLaw::Rademacher => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
            WeightLaw::Mammen => {
                let r5 = 5f64.sqrt();
                if rng.random_bool((r5 + 1.0) / (2.0 * r5)) {
                    -(r5 - 1.0) / 2.0
                } else {
                    (r5 + 1.0) / 2.0
                }
            }
        }
    }
}

impl std::str::FromStr for WeightLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(WeightLaw::Rademacher),
            "mammen" => Ok(WeightLaw::Mammen),
            other => Err(Error::Validation(format!("unknown weight law `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub weight_law: WeightLaw,
    pub confidence_level: f64,
    /// Spread replicates over threads. Results do not depend on it.
    pub parallel: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 0,
            weight_law: WeightLaw::Rademacher,
            confidence_level: 0.95,
            parallel: true,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::TooFewReplicates(self.replicates));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::Validation(format!(
                "confidence level {} outside (0, 1)",
                self.confidence_level
            )));
        }
        Ok(())
    }
}

/// Multipliers of replicate `b`, one per unit in list order.
fn multipliers(config: &BootstrapConfig, b: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| config.weight_law.draw(&mut rng)).collect()
}

struct Centered {
    k: i64,
    estimate: f64,
    /// (unit position, ψ_i − ψ̄)
    terms: Vec<(usize, f64)>,
}

fn centered(contributions: &[UnitContribution]) -> Vec<Centered> {
    let estimates = reconstruct(contributions);
    estimates
        .into_iter()
        .map(|(k, estimate)| Centered {
            k,
            estimate,
            terms: contributions
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.per_event_time.get(&k).map(|v| (i, v - estimate)))
                .collect(),
        })
        .collect()
}

/// Perturbed estimates, indexed `[k][b]`. Replicate `b` depends only on the
/// seed and `b`.
pub fn replicate_estimates(
    contributions: &[UnitContribution],
    config: &BootstrapConfig,
) -> BTreeMap<i64, Vec<f64>> {
    let series = centered(contributions);
    let one = |b: usize| -> Vec<f64> {
        let w = multipliers(config, b, contributions.len());
        series
            .iter()
            .map(|s| {
                let n = s.terms.len() as f64;
                s.estimate + s.terms.iter().map(|&(i, d)| w[i] * d).sum::<f64>() / n
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> = if config.parallel {
        (0..config.replicates).into_par_iter().map(one).collect()
    } else {
        (0..config.replicates).map(one).collect()
    };
    series
        .iter()
        .enumerate()
        .map(|(j, s)| (s.k, rows.iter().map(|r| r[j]).collect()))
        .collect()
}

/// Linearly interpolated sample quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval per event time.
pub fn wild_bootstrap_ci(
    contributions: &[UnitContribution],
    config: &BootstrapConfig,
) -> Result<BTreeMap<i64, (f64, f64)>> {
    config.validate()?;
    if contributions.is_empty() {
        return Err(Error::Empty("no unit contributions"));
    }
    let alpha = 1.0 - config.confidence_level;
    Ok(replicate_estimates(contributions, config)
        .into_iter()
        .map(|(k, mut draws)| {
            draws.sort_by(f64::total_cmp);
            (k, (quantile(&draws, alpha / 2.0), quantile(&draws, 1.0 - alpha / 2.0)))
        })
        .collect())
}

/// Stores intervals on the matching ATT event times.
pub fn attach_intervals(att: &mut AttResult, intervals: &BTreeMap<i64, (f64, f64)>) {
    for (k, point) in att.by_event_time.iter_mut() {
        if let Some(&(lo, hi)) = intervals.get(k) {
            point.ci_lower = Some(lo);
            point.ci_upper = Some(hi);
        }
    }
}
