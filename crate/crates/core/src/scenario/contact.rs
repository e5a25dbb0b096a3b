use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ContactMatrix;

/// Reads an `n x n` CSV contact matrix, `n = population.len()`.
///
/// Lines starting with `#` are ignored. With `raw = true` the entries are
/// contacts per person and column `j` is divided by `P_j` to get per-capita
/// rates.
pub fn load_contact_matrix(path: &Path, raw: bool, population: &[f64]) -> Result<ContactMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_contact_matrix(file, raw, population).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

/// Same as [`load_contact_matrix`] for an in-memory source. Parse errors
/// carry an empty path.
pub fn parse_contact_matrix(reader: impl Read, raw: bool, population: &[f64]) -> Result<ContactMatrix> {
    let n = population.len();
    let parse_err = |message: String| Error::Parse { path: Default::default(), message };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut rows = Vec::with_capacity(n);
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() != n {
            return Err(parse_err(format!("row {} has {} columns, expected {n}", r + 1, record.len())));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .map_err(|_| parse_err(format!("row {}, column {}: '{cell}' is not a number", r + 1, c + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(parse_err(format!("found {} rows, expected {n}", rows.len())));
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::validation(format!(
                    "contact matrix entry ({}, {}) = {x} must be finite and nonnegative",
                    r + 1,
                    c + 1
                )));
            }
        }
    }
    if raw {
        if let Some((k, p)) = population.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::validation(format!("population[{k}] = {p} must be positive")));
        }
        for row in &mut rows {
            for (x, p) in row.iter_mut().zip(population) {
                *x /= p;
            }
        }
    }
    ContactMatrix::from_rows(rows)
}
