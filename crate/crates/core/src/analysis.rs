//! One full staggered analysis of a study frame: cohort estimates, overall
//! ATT, and (optionally) bootstrap intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::inference::{
    attach_intervals, series_contributions, unit_contributions, wild_bootstrap_ci,
    BootstrapConfig, UnitContribution,
};
use crate::panel::StudyFrame;
use crate::staggered::{
    all_cohort_effects, overall_att, pooled_cohort_effects, AttResult, FitMode, OutcomeScale,
    PooledFit,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub estimator: Estimator,
    pub fit_mode: FitMode,
    /// Pooling weight for cohort-average synthetic controls; `None` fits
    /// cohorts independently. Ignored for DiD and for per-unit fits.
    pub pooling_weight: Option<f64>,
    /// `None` skips interval estimation.
    pub bootstrap: Option<BootstrapConfig>,
    pub outcome_scale: OutcomeScale,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            estimator: Estimator::FeAscm,
            fit_mode: FitMode::CohortAverageTarget,
            pooling_weight: Some(0.5),
            bootstrap: Some(BootstrapConfig::default()),
            outcome_scale: OutcomeScale::Level,
        }
    }
}

impl AnalysisSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(nu) = self.pooling_weight {
            if !(0.0..=1.0).contains(&nu) {
                return Err(Error::Validation(format!("pooling weight {nu} outside [0, 1]")));
            }
        }
        if let Some(b) = &self.bootstrap {
            b.validate()?;
        }
        Ok(())
    }

    /// Whether the pooled solver is used under these settings.
    pub fn pools(&self) -> bool {
        self.pooling_weight.is_some()
            && self.estimator != Estimator::Did
            && self.fit_mode == FitMode::CohortAverageTarget
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub att: AttResult,
    /// Unit contributions to the ATT; present when intervals were requested.
    pub contributions: Option<Vec<UnitContribution>>,
    /// Intervals of each cohort series, keyed by cohort year.
    pub cohort_intervals: BTreeMap<i64, BTreeMap<i64, (f64, f64)>>,
    pub pooled: Option<PooledFit>,
}

/// Estimates every cohort, aggregates, and attaches intervals.
pub fn analyze(frame: &StudyFrame, settings: &AnalysisSettings) -> Result<Analysis> {
    settings.validate()?;
    let (cohorts, pooled) = if settings.pools() {
        let nu = settings.pooling_weight.expect("pools() checked");
        let (c, fit) = pooled_cohort_effects(frame, settings.estimator, nu)?;
        (c, Some(fit))
    } else {
        (all_cohort_effects(frame, settings.estimator, settings.fit_mode)?, None)
    };
    let mut att = overall_att(frame, &cohorts)
        .map_err(|e| e.in_stage("aggregation", "all cohorts"))?
        .with_scale(settings.outcome_scale);
    let mut contributions = None;
    let mut cohort_intervals = BTreeMap::new();
    if let Some(config) = &settings.bootstrap {
        let c = unit_contributions(&frame.panel, &att)?;
        let ci = wild_bootstrap_ci(&c, config).map_err(|e| e.in_stage("bootstrap", "overall ATT"))?;
        attach_intervals(&mut att, &ci);
        for cohort in &att.cohorts {
            let cc = series_contributions(&frame.panel, &cohort.effect)?;
            let ci = wild_bootstrap_ci(&cc, config)
                .map_err(|e| e.in_stage("bootstrap", cohort.effect.focal.clone()))?;
            cohort_intervals.insert(cohort.cohort_year, ci);
        }
        contributions = Some(c);
    }
    Ok(Analysis {
        att,
        contributions,
        cohort_intervals,
        pooled,
    })
}
