//! Comma-separated tables with a header row.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("table has no data rows")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Numeric table: header names and one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: Array2<f64>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize, CsvError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    }

    /// Columns selected by header name, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Array2<f64>, CsvError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.values.select(Axis(1), &idx))
    }

    /// Every column not named in `exclude`, in file order.
    pub fn remaining(&self, exclude: &[String]) -> (Vec<String>, Array2<f64>) {
        let idx: Vec<usize> = (0..self.headers.len())
            .filter(|&i| !exclude.contains(&self.headers[i]))
            .collect();
        let names = idx.iter().map(|&i| self.headers[i].clone()).collect();
        (names, self.values.select(Axis(1), &idx))
    }
}

/// Parses a numeric CSV with a header row. Errors cite the 1-based line.
pub fn read_table<R: Read>(r: R) -> Result<Table, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let width = headers.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CsvError::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(rows as u64 + 2);
        if rec.len() != width {
            return Err(CsvError::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CsvError::Parse {
                line,
                message: format!("column `{}`: cannot parse `{field}` as a number", headers[col]),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CsvError::Empty);
    }
    let values = Array2::from_shape_vec((rows, width), data).expect("rows x width values");
    Ok(Table { headers, values })
}

/// Writes `values` under `headers`; floats use the shortest round-trip form.
pub fn write_table<W: Write>(w: W, headers: &[String], values: ArrayView2<f64>) -> Result<(), CsvError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(headers)?;
    for row in values.outer_iter() {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `psi_1, ..., psi_d` headers for diffusion coordinates.
pub fn coordinate_headers(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("psi_{k}")).collect()
}
