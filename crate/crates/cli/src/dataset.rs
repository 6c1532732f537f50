//! Comma-separated dataset files.
//!
//! A labeled file has the header `x0,x1,...,x{D-1},label`; an unlabeled file
//! drops the label column. Features are written in the shortest decimal form
//! that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dpn_core::data::{LabeledDataset, UnlabeledDataset};

use crate::error::{CliError, CliResult};

const LABEL: &str = "label";

struct Table {
    dim: usize,
    labeled: bool,
    features: Vec<f64>,
    labels: Vec<usize>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(file);
    let mut records = reader.records();
    let header = match records.next() {
        None => {
            return Err(CliError::parse(
                path,
                "line 1: empty file, expected a header",
            ))
        }
        Some(r) => r.map_err(|e| csv_error(path, e))?,
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let labeled = names.last() == Some(&LABEL);
    let dim = names.len() - usize::from(labeled);
    if dim == 0 {
        return Err(CliError::parse(
            path,
            "line 1: header has no feature columns",
        ));
    }
    for (i, name) in names[..dim].iter().enumerate() {
        if *name != format!("x{i}") {
            return Err(CliError::parse(
                path,
                format!(
                    "line 1, column {}: expected header `x{i}`, found `{name}`",
                    i + 1
                ),
            ));
        }
    }
    let mut table = Table {
        dim,
        labeled,
        features: Vec::new(),
        labels: Vec::new(),
    };
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(CliError::parse(
                path,
                format!(
                    "line {line}: {} fields, header has {}",
                    record.len(),
                    names.len()
                ),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            let at = || format!("line {line}, column {}", col + 1);
            if col < dim {
                let v: f64 = field.parse().map_err(|_| {
                    CliError::parse(path, format!("{}: `{field}` is not a number", at()))
                })?;
                if !v.is_finite() {
                    return Err(CliError::parse(
                        path,
                        format!("{}: `{field}` is not finite", at()),
                    ));
                }
                table.features.push(v);
            } else {
                let l: usize = field.parse().map_err(|_| {
                    CliError::parse(path, format!("{}: `{field}` is not a class index", at()))
                })?;
                table.labels.push(l);
            }
        }
    }
    if table.features.is_empty() {
        return Err(CliError::parse(path, "no data rows"));
    }
    Ok(table)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => CliError::parse(
            path,
            format!(
                "line {}: {len} fields, header has {expected_len}",
                line.unwrap_or(0)
            ),
        ),
        other => CliError::parse(path, format!("line {}: {other:?}", line.unwrap_or(0))),
    }
}

/// Load a labeled dataset. `num_classes` defaults to one more than the
/// largest label (at least 2).
pub fn load_labeled(path: &Path, num_classes: Option<usize>) -> CliResult<LabeledDataset> {
    let table = read_table(path)?;
    if !table.labeled {
        return Err(CliError::parse(path, "line 1: missing `label` column"));
    }
    let k = num_classes.unwrap_or_else(|| table.labels.iter().max().map_or(2, |m| (m + 1).max(2)));
    LabeledDataset::new(table.features, table.dim, table.labels, k)
        .map_err(|e| CliError::parse(path, e))
}

/// Load an unlabeled dataset. A `label` column, if present, is ignored.
pub fn load_unlabeled(path: &Path) -> CliResult<UnlabeledDataset> {
    let table = read_table(path)?;
    UnlabeledDataset::new(table.features, table.dim).map_err(|e| CliError::parse(path, e))
}

fn header(dim: usize, labeled: bool) -> String {
    let mut cols: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    if labeled {
        cols.push(LABEL.to_string());
    }
    cols.join(",")
}

fn write_rows<'a>(
    path: &Path,
    dim: usize,
    rows: impl Iterator<Item = (&'a [f64], Option<usize>)>,
    labeled: bool,
) -> CliResult<()> {
    let io = |e| CliError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", header(dim, labeled)).map_err(io)?;
    for (row, label) in rows {
        let mut line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        if let Some(l) = label {
            line.push(',');
            line.push_str(&l.to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn save_labeled(data: &LabeledDataset, path: &Path) -> CliResult<()> {
    let rows = data.rows().zip(data.labels()).map(|(r, &l)| (r, Some(l)));
    write_rows(path, data.dim(), rows, true)
}

pub fn save_unlabeled(data: &UnlabeledDataset, path: &Path) -> CliResult<()> {
    write_rows(path, data.dim(), data.rows().map(|r| (r, None)), false)
}
