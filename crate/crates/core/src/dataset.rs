//! Numeric CSV input for model selection on user data.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// Response plus named predictors read from a headed CSV file.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub response: String,
    pub y: Vec<f64>,
    /// Predictor names, one per design column.
    pub names: Vec<String>,
    pub x: DesignMatrix<f64>,
}

/// Reads a comma-separated file with a header row. The column named
/// `response` becomes `y`; every other column is a predictor.
pub fn read_csv<R: Read>(reader: R, response: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let Some(ycol) = headers.iter().position(|h| h == response) else {
        return Err(Error::input(format!(
            "response column '{response}' not found (columns: {})",
            headers.join(", ")
        )));
    };
    let names: Vec<String> = headers.iter().enumerate().filter(|&(i, _)| i != ycol).map(|(_, h)| h.clone()).collect();
    if names.is_empty() {
        return Err(Error::input("no predictor columns (p = 0)"));
    }
    let p = names.len();
    let mut y = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::input(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let mut k = 0;
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::input(format!("row {row}, column '{}': '{field}' is not a number", headers[c]))
            })?;
            if !value.is_finite() {
                return Err(Error::input(format!("row {row}, column '{}': non-finite value", headers[c])));
            }
            if c == ycol {
                y.push(value);
            } else {
                columns[k].push(value);
                k += 1;
            }
        }
    }
    if y.is_empty() {
        return Err(Error::input("no data rows (n = 0)"));
    }
    Ok(Dataset {
        response: response.to_string(),
        y,
        names,
        x: DesignMatrix::from_columns(&columns)?,
    })
}

pub fn load_csv(path: impl AsRef<Path>, response: &str) -> Result<Dataset> {
    read_csv(File::open(path)?, response)
}
