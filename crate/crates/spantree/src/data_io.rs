//! Tabular data ingestion for the dendrogram fitter: CSV with a header
//! row, a caller-chosen subset of numeric columns, and optional log and
//! standardization transforms.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("could not read data file")]
    Io(#[from] std::io::Error),
    #[error("csv parsing failed")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in the header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not numeric")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: log transform needs positive values, got {value}")]
    NonPositive { row: usize, column: String, value: f64 },
    #[error("column `{0}` has zero variance; cannot standardize")]
    ZeroVariance(String),
    #[error("no data rows")]
    Empty,
    #[error("no columns selected")]
    NoColumns,
}

/// Ingest transforms, applied per column in declaration order: log first,
/// then centering and scaling to unit sample variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub log_transform: bool,
    pub standardize: bool,
}

/// Reads the named columns of a headered CSV into an observations-by-columns
/// matrix. Errors carry 1-based data-row numbers and the column name.
pub fn read_csv_columns<R: Read>(
    reader: R,
    columns: &[String],
    opts: IngestOptions,
) -> Result<DMatrix<f64>, IngestError> {
    if columns.is_empty() {
        return Err(IngestError::NoColumns);
    }
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let mut indices = Vec::with_capacity(columns.len());
    for name in columns {
        let idx = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.clone()))?;
        indices.push(idx);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ridx, record) in csv.records().enumerate() {
        let record = record?;
        let row_no = ridx + 1;
        let mut row = Vec::with_capacity(indices.len());
        for (&cidx, name) in indices.iter().zip(columns) {
            let raw = record.get(cidx).unwrap_or("").trim();
            let value: f64 = raw.parse().map_err(|_| IngestError::NotNumeric {
                row: row_no,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(IngestError::NotNumeric {
                    row: row_no,
                    column: name.clone(),
                    value: raw.to_string(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    let n = rows.len();
    let d = columns.len();
    let mut data = DMatrix::zeros(n, d);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            data[(i, j)] = v;
        }
    }
    if opts.log_transform {
        for j in 0..d {
            for i in 0..n {
                let v = data[(i, j)];
                if v <= 0.0 {
                    return Err(IngestError::NonPositive {
                        row: i + 1,
                        column: columns[j].clone(),
                        value: v,
                    });
                }
                data[(i, j)] = v.ln();
            }
        }
    }
    if opts.standardize {
        standardize_in_place(&mut data, columns)?;
    }
    Ok(data)
}

/// Centers each column to mean zero and scales it to unit sample variance
/// (the n-1 convention).
fn standardize_in_place(data: &mut DMatrix<f64>, columns: &[String]) -> Result<(), IngestError> {
    let n = data.nrows();
    for j in 0..data.ncols() {
        let mean = data.column(j).sum() / n as f64;
        let mut ss = 0.0;
        for i in 0..n {
            ss += (data[(i, j)] - mean).powi(2);
        }
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        if var <= 0.0 {
            return Err(IngestError::ZeroVariance(columns[j].clone()));
        }
        let sd = var.sqrt();
        for i in 0..n {
            data[(i, j)] = (data[(i, j)] - mean) / sd;
        }
    }
    Ok(())
}

pub fn load_csv_columns(
    path: &Path,
    columns: &[String],
    opts: IngestOptions,
) -> Result<DMatrix<f64>, IngestError> {
    let file = std::fs::File::open(path)?;
    read_csv_columns(std::io::BufReader::new(file), columns, opts)
}
