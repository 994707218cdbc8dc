//! Batch runs: configuration, orchestration and persisted results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, Analysis, AnalysisSettings};
use crate::diagnostics::{
    export_plot_series, fit_report, max_placebo_shift, placebo_in_time, FitReport, FitThresholds,
    PlaceboInTimeResult, PlotTables,
};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::fixtures;
use crate::inference::{BootstrapConfig, WeightLaw};
use crate::io::{
    format_number, format_optional, load_panel, load_schedule, panel_csv, schedule_csv, sha256_file,
    table_csv, write_atomic, Columns,
};
use crate::panel::{apply_inclusion_filter, transform_outcome, Exclusion, StudyFrame, Transform};
use crate::staggered::{AttResult, FitMode, OutcomeScale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub enabled: bool,
    pub replicates: usize,
    pub weight_law: WeightLaw,
    pub confidence_level: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        BootstrapSection {
            enabled: true,
            replicates: d.replicates,
            weight_law: d.weight_law,
            confidence_level: d.confidence_level,
        }
    }
}

/// Settings of one run. Relative paths are resolved against the directory
/// of the file the configuration was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Long-format outcome file.
    pub panel: PathBuf,
    /// Treatment table with `unit` and `adoption_year` columns.
    pub schedule: PathBuf,
    pub unit_column: String,
    pub time_column: String,
    pub outcome_column: String,
    pub post_horizon: usize,
    pub min_pre_periods: usize,
    pub estimator: Estimator,
    pub fit_mode: FitMode,
    /// Weight on the pooled fit term; 0 fits cohorts independently.
    pub pooling_weight: f64,
    /// Further pooling weights reported in `sensitivity.csv`.
    pub sensitivity_weights: Vec<f64>,
    pub transform: Transform,
    pub seed: u64,
    pub bootstrap: BootstrapSection,
    /// Shifts for the placebo sweep; empty means every admissible shift.
    pub placebo_shifts: Vec<usize>,
    pub poor_fit_ratio: f64,
    pub short_pre_periods: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = Columns::default();
        let t = FitThresholds::default();
        RunConfig {
            panel: PathBuf::from("panel.csv"),
            schedule: PathBuf::from("schedule.csv"),
            unit_column: c.unit,
            time_column: c.time,
            outcome_column: c.outcome,
            post_horizon: 10,
            min_pre_periods: 4,
            estimator: Estimator::FeAscm,
            fit_mode: FitMode::CohortAverageTarget,
            pooling_weight: 0.5,
            sensitivity_weights: vec![0.0, 1.0],
            transform: Transform::Identity,
            seed: 0,
            bootstrap: BootstrapSection::default(),
            placebo_shifts: Vec::new(),
            poor_fit_ratio: t.poor_fit_ratio,
            short_pre_periods: t.min_pre_periods,
            out: PathBuf::from("results"),
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. A run manifest is
    /// accepted as a JSON configuration.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let invalid = |m: String| Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: m,
        };
        let mut config: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
            let inner = match value.get("config") {
                Some(c) if value.get("manifest_version").is_some() => c.clone(),
                _ => value,
            };
            serde_json::from_value(inner).map_err(|e| invalid(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| invalid(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.panel, &mut config.schedule, &mut config.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn columns(&self) -> Columns {
        Columns {
            unit: self.unit_column.clone(),
            time: self.time_column.clone(),
            outcome: self.outcome_column.clone(),
        }
    }

    pub fn thresholds(&self) -> FitThresholds {
        FitThresholds {
            min_pre_periods: self.short_pre_periods,
            poor_fit_ratio: self.poor_fit_ratio,
        }
    }

    pub fn bootstrap_config(&self) -> Option<BootstrapConfig> {
        self.bootstrap.enabled.then_some(BootstrapConfig {
            replicates: self.bootstrap.replicates,
            seed: self.seed,
            weight_law: self.bootstrap.weight_law,
            confidence_level: self.bootstrap.confidence_level,
            parallel: true,
        })
    }

    pub fn analysis_settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            estimator: self.estimator,
            fit_mode: self.fit_mode,
            pooling_weight: Some(self.pooling_weight),
            bootstrap: self.bootstrap_config(),
            outcome_scale: OutcomeScale::from(self.transform),
        }
    }

    /// Range checks that need no data.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.min_pre_periods < 1 {
            return bad("min_pre_periods must be at least 1".into());
        }
        for nu in std::iter::once(&self.pooling_weight).chain(&self.sensitivity_weights) {
            if !(0.0..=1.0).contains(nu) {
                return bad(format!("pooling weight {nu} outside [0, 1]"));
            }
        }
        if !(self.poor_fit_ratio >= 0.0) {
            return bad("poor_fit_ratio must be non-negative".into());
        }
        if self.placebo_shifts.contains(&0) {
            return bad("placebo shifts must be positive".into());
        }
        self.analysis_settings().validate()?;
        for (what, p) in [("panel", &self.panel), ("schedule", &self.schedule)] {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} file not found")),
                ));
            }
        }
        Ok(())
    }
}

/// Validated inputs of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub frame: StudyFrame,
    pub warnings: Vec<String>,
    pub inputs: BTreeMap<String, String>,
}

/// Loads and filters the data; nothing is estimated.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.check()?;
    let loaded = load_panel(&config.panel, &config.columns())?;
    let schedule = load_schedule(&config.schedule)?;
    if config.post_horizon >= loaded.panel.n_times() {
        return Err(Error::Validation(format!(
            "post horizon K={} does not fit a panel of {} periods",
            config.post_horizon,
            loaded.panel.n_times()
        )));
    }
    let panel = transform_outcome(&loaded.panel, config.transform)?;
    let frame = apply_inclusion_filter(panel, schedule, config.post_horizon, config.min_pre_periods)?;
    let mut inputs = BTreeMap::new();
    for p in [&config.panel, &config.schedule] {
        inputs.insert(p.display().to_string(), sha256_file(p)?);
    }
    Ok(Prepared {
        frame,
        warnings: loaded.warnings,
        inputs,
    })
}

/// Everything an `estimate` run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub analysis: Analysis,
    pub report: FitReport,
    pub tables: PlotTables,
    /// ATT for each extra pooling weight (without intervals).
    pub sensitivity: Vec<(f64, AttResult)>,
    pub warnings: Vec<String>,
    pub exclusions: Vec<Exclusion>,
    pub inputs: BTreeMap<String, String>,
}

/// Filter, estimate every cohort, aggregate, bootstrap and tabulate.
pub fn run_pipeline(config: &RunConfig) -> Result<RunArtifacts> {
    let prepared = prepare(config)?;
    run_prepared(config, prepared)
}

pub fn run_prepared(config: &RunConfig, prepared: Prepared) -> Result<RunArtifacts> {
    let frame = &prepared.frame;
    let settings = config.analysis_settings();
    let analysis = analyze(frame, &settings)?;
    let mut sensitivity = Vec::new();
    if settings.pools() {
        for &nu in &config.sensitivity_weights {
            let alt = AnalysisSettings {
                pooling_weight: Some(nu),
                bootstrap: None,
                ..settings.clone()
            };
            let a = analyze(frame, &alt).map_err(|e| e.in_stage("sensitivity", format!("pooling weight {nu}")))?;
            sensitivity.push((nu, a.att));
        }
    }
    let report = fit_report(frame, &analysis, config.thresholds());
    let tables = export_plot_series(&analysis, &report);
    let mut warnings = prepared.warnings.clone();
    warnings.extend(report.flags().iter().map(|(e, f)| format!("{e}: {f}")));
    if let Some(p) = &analysis.pooled {
        if !p.converged_all() {
            warnings.push(format!("pooled fit at weight {} did not converge", p.nu));
        }
    }
    Ok(RunArtifacts {
        config: config.clone(),
        analysis,
        report,
        tables,
        sensitivity,
        warnings,
        exclusions: frame.exclusions.clone(),
        inputs: prepared.inputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outcome_scale: OutcomeScale,
    pub warnings: Vec<String>,
    pub exclusions: Vec<String>,
    pub outputs: Vec<String>,
}

fn manifest(
    config: &RunConfig,
    inputs: &BTreeMap<String, String>,
    warnings: &[String],
    exclusions: &[Exclusion],
    outputs: &[&str],
) -> Manifest {
    Manifest {
        manifest_version: 1,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config: config.clone(),
        inputs: inputs.clone(),
        outcome_scale: config.transform.into(),
        warnings: warnings.to_vec(),
        exclusions: exclusions
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializable"))
            .collect(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m).expect("serializable");
    text.push('\n');
    write_atomic(dir.join("manifest.json"), text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub const ATT_HEADER: [&str; 5] = ["event_time", "estimate", "ci_lower", "ci_upper", "n_contributing"];

pub fn att_csv(att: &AttResult) -> Result<Vec<u8>> {
    table_csv(
        &ATT_HEADER,
        att.by_event_time.iter().map(|(k, p)| {
            vec![
                k.to_string(),
                format_number(p.estimate),
                format_optional(p.ci_lower),
                format_optional(p.ci_upper),
                p.n_contributing.to_string(),
            ]
        }),
    )
}

/// Writes the result tables and the manifest into `dir`; returns file names.
pub fn write_results(artifacts: &RunArtifacts, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let t = &artifacts.tables;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("att.csv", att_csv(&artifacts.analysis.att)?),
        (
            "event_study.csv",
            table_csv(
                &["entity", "event_time", "estimate", "ci_lower", "ci_upper"],
                t.event_study.iter().map(|r| {
                    vec![
                        r.entity.clone(),
                        r.event_time.to_string(),
                        format_number(r.estimate),
                        format_optional(r.ci_lower),
                        format_optional(r.ci_upper),
                    ]
                }),
            )?,
        ),
        (
            "weights.csv",
            table_csv(
                &["entity", "donor", "weight"],
                t.weights
                    .iter()
                    .map(|r| vec![r.entity.clone(), r.donor.clone(), format_number(r.weight)]),
            )?,
        ),
        (
            "fit.csv",
            table_csv(
                &["entity", "rmspe", "n_pre", "flags"],
                t.fit.iter().map(|r| {
                    vec![
                        r.entity.clone(),
                        format_optional(r.rmspe),
                        r.n_pre.to_string(),
                        r.flags.clone(),
                    ]
                }),
            )?,
        ),
        (
            "counts.csv",
            table_csv(
                &["event_time", "n_contributing"],
                t.counts
                    .iter()
                    .map(|r| vec![r.event_time.to_string(), r.n_contributing.to_string()]),
            )?,
        ),
    ];
    if !artifacts.sensitivity.is_empty() {
        let mut rows = Vec::new();
        let main = artifacts.config.pooling_weight;
        let mut all: Vec<(f64, &AttResult)> = vec![(main, &artifacts.analysis.att)];
        all.extend(artifacts.sensitivity.iter().map(|(nu, a)| (*nu, a)));
        for (nu, att) in all {
            for (k, p) in &att.by_event_time {
                rows.push(vec![format_number(nu), k.to_string(), format_number(p.estimate)]);
            }
        }
        files.push(("sensitivity.csv", table_csv(&["nu", "event_time", "estimate"], rows)?));
    }
    let mut names: Vec<&str> = files.iter().map(|f| f.0).collect();
    names.push("manifest.json");
    for (name, bytes) in &files {
        write_atomic(dir.join(name), bytes)?;
    }
    write_manifest(
        dir,
        &manifest(
            &artifacts.config,
            &artifacts.inputs,
            &artifacts.warnings,
            &artifacts.exclusions,
            &names,
        ),
    )?;
    Ok(names.into_iter().map(String::from).collect())
}

/// Placebo-in-time estimates for the configured shifts.
pub fn run_placebo(config: &RunConfig) -> Result<(Prepared, Vec<PlaceboInTimeResult>)> {
    let prepared = prepare(config)?;
    let (max, _) = max_placebo_shift(&prepared.frame)?;
    let shifts: Vec<usize> = if config.placebo_shifts.is_empty() {
        (1..=max).collect()
    } else {
        config.placebo_shifts.clone()
    };
    let settings = config.analysis_settings();
    let results = shifts
        .iter()
        .map(|&s| placebo_in_time(&prepared.frame, s, &settings))
        .collect::<Result<Vec<_>>>()?;
    Ok((prepared, results))
}

pub fn write_placebo(
    config: &RunConfig,
    prepared: &Prepared,
    results: &[PlaceboInTimeResult],
    dir: impl AsRef<Path>,
) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let bytes = table_csv(
        &["shift", "average_placebo_effect", "ci_lower", "ci_upper"],
        results.iter().map(|r| {
            vec![
                r.shift.to_string(),
                format_number(r.average_placebo_effect),
                format_optional(r.ci.map(|c| c.0)),
                format_optional(r.ci.map(|c| c.1)),
            ]
        }),
    )?;
    write_atomic(dir.join("placebo.csv"), &bytes)?;
    let names = ["placebo.csv", "manifest.json"];
    write_manifest(
        dir,
        &manifest(
            config,
            &prepared.inputs,
            &prepared.warnings,
            &prepared.frame.exclusions,
            &names,
        ),
    )?;
    Ok(names.iter().map(|s| s.to_string()).collect())
}

/// Writes the synthetic fixture panels, their treatment tables and a
/// ready-to-run configuration for each into `dir`.
pub fn export_fixtures(dir: impl AsRef<Path>, seed: u64) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let spec = fixtures::SimulationSpec::default();
    let all = [
        fixtures::toy(),
        fixtures::rtc_like(seed, 0.0),
        fixtures::factor_trends(seed, &spec),
        fixtures::null_panel(seed, &spec),
        fixtures::exact_convex(seed, 2.0),
    ];
    let columns = Columns::default();
    let mut written = Vec::new();
    for f in &all {
        let panel = format!("{}_panel.csv", f.name);
        let schedule = format!("{}_schedule.csv", f.name);
        let config_name = format!("{}.toml", f.name);
        let config = RunConfig {
            panel: PathBuf::from(&panel),
            schedule: PathBuf::from(&schedule),
            post_horizon: f.post_horizon,
            min_pre_periods: f.min_pre_periods,
            seed,
            out: PathBuf::from(format!("{}_results", f.name)),
            ..RunConfig::default()
        };
        let toml_text = toml::to_string(&config)
            .map_err(|e| Error::Validation(format!("config encoding failed: {e}")))?;
        write_atomic(dir.join(&panel), &panel_csv(&f.panel, &columns)?)?;
        write_atomic(dir.join(&schedule), &schedule_csv(&f.schedule)?)?;
        write_atomic(dir.join(&config_name), toml_text.as_bytes())?;
        written.extend([panel, schedule, config_name]);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(dir: &Path) -> RunConfig {
        export_fixtures(dir, 7).unwrap();
        let mut c = RunConfig::load(dir.join("toy.toml")).unwrap();
        c.bootstrap.replicates = 200;
        c
    }

    #[test]
    fn toy_run_writes_every_table() {
        let dir = tempfile::tempdir().unwrap();
        let c = toy_config(dir.path());
        let a = run_pipeline(&c).unwrap();
        let names = write_results(&a, &c.out).unwrap();
        for n in ["att.csv", "event_study.csv", "weights.csv", "fit.csv", "counts.csv", "manifest.json"] {
            assert!(names.iter().any(|x| x == n));
            assert!(c.out.join(n).is_file(), "{n}");
        }
    }

    #[test]
    fn horizon_longer_than_panel_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = toy_config(dir.path());
        c.post_horizon = 40;
        let e = prepare(&c).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = toy_config(dir.path());
        c.panel = dir.path().join("nope.csv");
        assert_eq!(prepare(&c).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn manifest_reloads_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = toy_config(dir.path());
        let a = run_pipeline(&c).unwrap();
        write_results(&a, &c.out).unwrap();
        let again = RunConfig::load(c.out.join("manifest.json")).unwrap();
        assert_eq!(again, c);
    }
}
