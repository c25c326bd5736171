//! CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, SneError};
use crate::types::{DataMatrix, RunTrace};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SneError + '_ {
    move |source| SneError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, err: csv::Error) -> SneError {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => SneError::Io { path: path.to_path_buf(), source },
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => SneError::Parse {
            path: path.to_path_buf(),
            line,
            column: "-".into(),
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        other => SneError::Parse {
            path: path.to_path_buf(),
            line,
            column: "-".into(),
            message: format!("{other:?}"),
        },
    }
}

/// Numeric table with a header row. Line numbers in errors are 1-based file
/// lines (the header is line 1).
pub fn load_table(path: &Path, label_column: Option<&str>) -> Result<(Array2<f64>, Option<Vec<String>>)> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let label_idx = match label_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            SneError::Data(format!("{}: no column named '{name}'", path.display()))
        })?),
        None => None,
    };
    let width = headers.len() - usize::from(label_idx.is_some());
    if width == 0 {
        return Err(SneError::Data(format!("{}: no numeric columns", path.display())));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                labels.push(cell.to_string());
                continue;
            }
            let parsed = cell.parse::<f64>().ok().filter(|v| v.is_finite());
            values.push(parsed.ok_or_else(|| SneError::Parse {
                path: path.to_path_buf(),
                line,
                column: headers[c].to_string(),
                message: format!("'{cell}' is not a finite number"),
            })?);
        }
        rows += 1;
    }
    let table = Array2::from_shape_vec((rows, width), values).map_err(|e| SneError::Shape(e.to_string()))?;
    Ok((table, label_idx.map(|_| labels)))
}

/// Loads a dataset; at least two rows are required.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<(DataMatrix, Option<Vec<String>>)> {
    let (table, labels) = load_table(path, label_column)?;
    if table.nrows() < 2 {
        return Err(SneError::Data(format!(
            "{}: need at least 2 data rows, found {}",
            path.display(),
            table.nrows()
        )));
    }
    Ok((DataMatrix::new(table)?, labels))
}

/// Writes rows under a `{prefix}1..{prefix}d` header with 17 significant digits.
pub fn write_matrix(path: &Path, prefix: &str, matrix: &Array2<f64>, labels: Option<&[String]>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = (1..=matrix.ncols()).map(|c| format!("{prefix}{c}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in matrix.rows().into_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(labels) = labels {
            fields.push(labels[i].clone());
        }
        writer.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| SneError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_err(path))
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    write_json(path, trace)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}
