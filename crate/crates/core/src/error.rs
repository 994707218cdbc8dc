//! Error type shared by every stage of the toolkit.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Estimation,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("no evaluable treated units remain after inclusion filtering")]
    NoEvaluableTreatedUnits,

    #[error("unit `{0}` is not an evaluable treated unit of this study frame")]
    NotTreated(String),

    #[error("no valid donors for focal `{focal}` with post horizon K={horizon}")]
    NoValidDonors { focal: String, horizon: usize },

    #[error("log transform requires positive outcomes; offending cells: {}", format_cells(.0))]
    NonPositiveOutcome(Vec<(String, i64)>),

    #[error("{0} has no pre-period entries")]
    NoPrePeriod(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("wild bootstrap needs at least 100 replicates, got {0}")]
    TooFewReplicates(usize),

    #[error("estimation run for `{0}` carries no stored weights or donor sets")]
    MissingDesign(String),

    #[error("placebo shift {shift} exceeds the maximum of {max} allowed by cohort {cohort}")]
    PlaceboShiftTooLarge { shift: usize, max: usize, cohort: i64 },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: duplicate entry for {key} at rows {first} and {second}")]
    Duplicate {
        path: PathBuf,
        key: String,
        first: usize,
        second: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} failed for {entity}: {source}")]
    Stage {
        stage: &'static str,
        entity: String,
        #[source]
        source: Box<Error>,
    },
}

fn format_cells(cells: &[(String, i64)]) -> String {
    cells
        .iter()
        .map(|(u, t)| format!("({u}, {t})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_)
            | Error::NonPositiveOutcome(_)
            | Error::Parse { .. }
            | Error::Duplicate { .. }
            | Error::TooFewReplicates(_)
            | Error::PlaceboShiftTooLarge { .. }
            | Error::Empty(_) => ErrorKind::Validation,
            Error::Io { .. } => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Estimation,
        }
    }

    /// 0 is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Estimation => 2,
            ErrorKind::Io => 3,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, entity: impl Into<String>) -> Error {
        Error::Stage {
            stage,
            entity: entity.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
