//! CSV interchange: one row per sample, one column per class.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use imax_calib::Scores64;

use crate::error::{CliError, CliResult};

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

/// Numeric rows, skipping a leading header row if it does not parse.
fn numeric_rows<T: std::str::FromStr>(path: &Path) -> CliResult<Vec<Vec<T>>> {
    let mut rows = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<T>, _> = rec.iter().map(str::parse).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::Data(format!(
                    "{}: line {}: cannot parse `{}`",
                    path.display(),
                    i + 1,
                    rec.iter().collect::<Vec<_>>().join(",")
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> CliResult<Scores64> {
    let rows: Vec<Vec<f64>> = numeric_rows(path)?;
    let k = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        return Err(CliError::Data(format!(
            "{}: row {} has {} columns, expected {k}",
            path.display(),
            i + 1,
            rows[i].len()
        )));
    }
    Ok(Scores64::from_rows(&rows)?)
}

pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let rows: Vec<Vec<usize>> = numeric_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [y] => Ok(*y),
            _ => Err(CliError::Data(format!("{}: row {} must hold one label", path.display(), i + 1))),
        })
        .collect()
}

/// Shortest round-trip float formatting.
pub fn scores_csv(m: &Scores64) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        out.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn labels_csv(labels: &[usize]) -> String {
    let mut out = String::new();
    for y in labels {
        out.push_str(&y.to_string());
        out.push('\n');
    }
    out
}

/// Write to `path`, or stdout when `path` is `None` or `-`.
pub fn emit(path: Option<&Path>, contents: &str) -> CliResult<()> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            std::fs::write(p, contents).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
