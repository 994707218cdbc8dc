//! Delimited-text input and output.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::panel::{Adoption, Panel, TreatmentSchedule};

/// Column names of a long-format panel file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Columns {
    pub unit: String,
    pub time: String,
    pub outcome: String,
}

impl Default for Columns {
    fn default() -> Self {
        Columns {
            unit: "unit".into(),
            time: "year".into(),
            outcome: "outcome".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub warnings: Vec<String>,
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("{other:?}"),
        },
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: format!("missing column `{name}`"),
        })
}

fn is_missing(field: &str) -> bool {
    matches!(field.to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | ".")
}

/// Reads a long-format panel file (one row per unit and period).
pub fn load_panel(path: impl AsRef<Path>, columns: &Columns) -> Result<LoadedPanel> {
    let path = path.as_ref();
    read_panel(open(path)?, path, columns)
}

/// Like [`load_panel`], reading from `reader`; `source` labels errors.
///
/// Units keep the order of first appearance. Periods span the smallest to the
/// largest time in the file; unit-period pairs without a row and empty or
/// `NA` outcomes are unobserved.
pub fn read_panel(reader: impl Read, source: &Path, columns: &Columns) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let (cu, ct, cy) = (
        column(&headers, &columns.unit, source)?,
        column(&headers, &columns.time, source)?,
        column(&headers, &columns.outcome, source)?,
    );
    let parse_err = |row: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        row,
        message,
    };

    let mut units: Vec<String> = Vec::new();
    let mut unit_ix: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, i64), (Option<f64>, usize)> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let unit = field(cu);
        if unit.is_empty() {
            return Err(parse_err(row, format!("empty `{}`", columns.unit)));
        }
        let time: i64 = field(ct).parse().map_err(|_| {
            parse_err(row, format!("`{}` value `{}` is not an integer", columns.time, field(ct)))
        })?;
        let raw = field(cy);
        let value = if is_missing(raw) {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| {
                parse_err(row, format!("`{}` value `{raw}` is not a number", columns.outcome))
            })?;
            v.is_finite().then_some(v)
        };
        let u = *unit_ix.entry(unit.to_string()).or_insert_with(|| {
            units.push(unit.to_string());
            units.len() - 1
        });
        if let Some((_, first)) = cells.insert((u, time), (value, row)) {
            return Err(Error::Duplicate {
                path: source.to_path_buf(),
                key: format!("({unit}, {time})"),
                first,
                second: row,
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::Empty("panel file has no data rows"));
    }
    let first = cells.keys().map(|k| k.1).min().expect("non-empty");
    let last = cells.keys().map(|k| k.1).max().expect("non-empty");
    let n_times = (last - first + 1) as usize;

    let mut warnings = Vec::new();
    let gaps: Vec<i64> = (first..=last)
        .filter(|t| !(0..units.len()).any(|u| cells.contains_key(&(u, *t))))
        .collect();
    if !gaps.is_empty() {
        warnings.push(format!(
            "{}: no rows for periods {:?}; treated as unobserved",
            source.display(),
            gaps
        ));
    }
    let mut rows = vec![vec![f64::NAN; n_times]; units.len()];
    let mut mask = vec![vec![false; n_times]; units.len()];
    let mut missing = 0usize;
    for ((u, t), (v, _)) in &cells {
        let i = (t - first) as usize;
        match v {
            Some(v) => {
                rows[*u][i] = *v;
                mask[*u][i] = true;
            }
            None => missing += 1,
        }
    }
    let absent = units.len() * n_times - cells.len();
    if missing + absent > 0 {
        warnings.push(format!(
            "{}: {} unit-period cells unobserved ({} without a row, {} without a value)",
            source.display(),
            missing + absent,
            absent,
            missing
        ));
    }
    Ok(LoadedPanel {
        panel: Panel::with_mask(units, first, rows, mask)?,
        warnings,
    })
}

/// Reads a treatment table with columns `unit` and `adoption_year`; the
/// token `never` marks never-treated units.
pub fn load_schedule(path: impl AsRef<Path>) -> Result<TreatmentSchedule> {
    let path = path.as_ref();
    read_schedule(open(path)?, path)
}

pub fn read_schedule(reader: impl Read, source: &Path) -> Result<TreatmentSchedule> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let cu = column(&headers, "unit", source)?;
    let ca = column(&headers, "adoption_year", source)?;
    let mut schedule = TreatmentSchedule::new();
    let mut rows: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let unit = record.get(cu).unwrap_or("");
        let token = record.get(ca).unwrap_or("");
        if unit.is_empty() {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                row,
                message: "empty `unit`".into(),
            });
        }
        let adoption = if token.eq_ignore_ascii_case("never") {
            Adoption::Never
        } else {
            Adoption::At(token.parse().map_err(|_| Error::Parse {
                path: source.to_path_buf(),
                row,
                message: format!("adoption `{token}` is neither an integer nor `never`"),
            })?)
        };
        if let Some(first) = rows.insert(unit.to_string(), row) {
            return Err(Error::Duplicate {
                path: source.to_path_buf(),
                key: unit.to_string(),
                first,
                second: row,
            });
        }
        schedule.insert(unit, adoption);
    }
    if schedule.is_empty() {
        return Err(Error::Empty("treatment table has no rows"));
    }
    Ok(schedule)
}

/// Fixed-point text form used in every output table: nine decimals, no
/// negative zero, `NaN` for missing.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return "NaN".into();
    }
    let s = format!("{v:.9}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn format_optional(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

/// CSV bytes for a header and string rows.
pub fn table_csv<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let internal = |e: csv::Error| Error::Validation(format!("table encoding failed: {e}"));
    w.write_record(header).map_err(internal)?;
    for r in rows {
        w.write_record(&r).map_err(internal)?;
    }
    w.into_inner().map_err(|e| Error::Validation(format!("table encoding failed: {e}")))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("`{}` is not a file path", path.display())))?;
    let tmp: PathBuf = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Long-format CSV of the observed cells of `panel`.
pub fn panel_csv(panel: &Panel, columns: &Columns) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (u, unit) in panel.units().iter().enumerate() {
        for &t in panel.times() {
            if let Some(v) = panel.value(u, t) {
                rows.push(vec![unit.clone(), t.to_string(), format_number(v)]);
            }
        }
    }
    table_csv(&[&columns.unit, &columns.time, &columns.outcome], rows)
}

pub fn schedule_csv(schedule: &TreatmentSchedule) -> Result<Vec<u8>> {
    table_csv(
        &["unit", "adoption_year"],
        schedule.iter().map(|(u, a)| vec![u.to_string(), a.to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn pivot_masks_missing_pairs() {
        let data = "unit,year,outcome\nA,1,1.5\nA,2,2.5\nB,1,3\n";
        let p = read_panel(data.as_bytes(), src(), &Columns::default()).unwrap();
        assert_eq!(p.panel.units(), ["A", "B"]);
        assert_eq!(p.panel.times(), [1, 2]);
        assert_eq!(p.panel.value(1, 2), None);
        assert_eq!(p.panel.value(0, 2), Some(2.5));
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn duplicate_rows_name_both_lines() {
        let data = "unit,year,outcome\nA,1,1\nB,1,2\nA,1,3\n";
        match read_panel(data.as_bytes(), src(), &Columns::default()) {
            Err(Error::Duplicate { first, second, key, .. }) => {
                assert_eq!((first, second), (2, 4));
                assert_eq!(key, "(A, 1)");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_location() {
        let data = "unit,year,outcome\nA,1,1\nA,2,abc\n";
        match read_panel(data.as_bytes(), src(), &Columns::default()) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn global_time_gap_is_masked_and_warned() {
        let data = "unit,year,outcome\nA,1,1\nA,3,1\nB,1,1\nB,3,2\n";
        let p = read_panel(data.as_bytes(), src(), &Columns::default()).unwrap();
        assert_eq!(p.panel.n_times(), 3);
        assert!(!p.panel.is_observed(0, 2));
        assert!(p.warnings[0].contains("[2]"));
    }

    #[test]
    fn custom_columns() {
        let data = "state,yr,rate\nOH,2000,1\n";
        let cols = Columns {
            unit: "state".into(),
            time: "yr".into(),
            outcome: "rate".into(),
        };
        let p = read_panel(data.as_bytes(), src(), &cols).unwrap();
        assert_eq!(p.panel.value(0, 2000), Some(1.0));
        assert!(read_panel(data.as_bytes(), src(), &Columns::default()).is_err());
    }

    #[test]
    fn schedule_tokens() {
        let data = "unit,adoption_year\nOH,2004\nCA,never\nNY,NEVER\n";
        let s = read_schedule(data.as_bytes(), src()).unwrap();
        assert_eq!(s.get("OH"), Some(Adoption::At(2004)));
        assert_eq!(s.get("CA"), Some(Adoption::Never));
        assert_eq!(s.get("NY"), Some(Adoption::Never));
        assert!(read_schedule("unit,adoption_year\nOH,soon\n".as_bytes(), src()).is_err());
        assert!(matches!(
            read_schedule("unit,adoption_year\nOH,2004\nOH,2005\n".as_bytes(), src()),
            Err(Error::Duplicate { first: 2, second: 3, .. })
        ));
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(1.0), "1.000000000");
        assert_eq!(format_number(-1e-12), "0.000000000");
        assert_eq!(format_number(-0.5), "-0.500000000");
        assert_eq!(format_number(f64::NAN), "NaN");
        let v = 1234.567890123456;
        assert!((format_number(v).parse::<f64>().unwrap() - v).abs() <= 5e-10);
    }

    #[test]
    fn panel_round_trip() {
        let data = "unit,year,outcome\nA,1,1.25\nA,2,2\nB,1,3\nB,2,-4.5\n";
        let p = read_panel(data.as_bytes(), src(), &Columns::default()).unwrap().panel;
        let bytes = panel_csv(&p, &Columns::default()).unwrap();
        let q = read_panel(&bytes[..], src(), &Columns::default()).unwrap().panel;
        assert_eq!(p, q);
    }
}
