use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkern::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// First record holds column labels.
    pub header: bool,
    /// First field of every record is a row label.
    pub row_labels: bool,
}

/// A numeric matrix with labels and the cells missing in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Missing cells hold 0.
    pub matrix: Matrix,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// 1 where the source had a value, 0 where the cell was empty or `NaN`.
    pub inherent_mask: Matrix,
}

impl Dataset {
    /// Fully observed dataset with index labels.
    pub fn from_matrix(matrix: Matrix) -> Self {
        let (m, n) = matrix.shape();
        Dataset {
            row_labels: (0..m).map(|i| i.to_string()).collect(),
            col_labels: (0..n).map(|j| j.to_string()).collect(),
            inherent_mask: Matrix::ones(m, n),
            matrix,
        }
    }

    /// Builds from a matrix whose missing cells are NaN.
    pub fn from_file_form(x: &Matrix) -> Self {
        let mut ds = Self::from_matrix(x.map(|v| if v.is_nan() { 0.0 } else { v }));
        ds.inherent_mask = x.map(|v| if v.is_nan() { 0.0 } else { 1.0 });
        ds
    }

    /// The matrix with inherently missing cells as NaN.
    pub fn file_form(&self) -> Matrix {
        self.matrix
            .zip_map(&self.inherent_mask, |v, m| if m == 1.0 { v } else { f64::NAN })
            .expect("matrix and mask share a shape")
    }

    pub fn has_missing(&self) -> bool {
        self.inherent_mask.count_where(|v| v == 0.0) > 0
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.matrix.shape();
        if self.row_labels.len() != m || self.col_labels.len() != n {
            return Err(Error::Validation(format!(
                "{} row / {} column labels for a {m}x{n} matrix",
                self.row_labels.len(),
                self.col_labels.len()
            )));
        }
        self.matrix.check_same_shape("dataset mask", &self.inherent_mask)?;
        if !self.inherent_mask.is_binary() {
            return Err(Error::Validation("inherent mask is not binary".into()));
        }
        Ok(())
    }
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na")
}

/// Parses CSV text. Ragged records and non-numeric cells are errors that
/// carry the 1-based line (and column) where they occur.
pub fn parse_csv(text: &str, options: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let skip = usize::from(options.row_labels);
    let mut col_labels: Option<Vec<String>> = None;
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (rec_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            location: e
                .position()
                .map(|p| format!("line {}", p.line()))
                .unwrap_or_else(|| format!("record {}", rec_idx + 1)),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(rec_idx as u64 + 1);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    location: format!("line {line}"),
                    message: format!("ragged row: {} fields, expected {w}", record.len()),
                })
            }
            _ => {}
        }
        if options.header && col_labels.is_none() {
            col_labels = Some(record.iter().skip(skip).map(|s| s.trim().to_string()).collect());
            continue;
        }
        if options.row_labels {
            row_labels.push(record.get(0).unwrap_or("").trim().to_string());
        }
        for (j, cell) in record.iter().skip(skip).enumerate() {
            if is_missing_token(cell) {
                values.push(0.0);
                mask.push(0.0);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    location: format!("line {line}, row {rows}, column {j}"),
                    message: format!("non-numeric cell `{}`", cell.trim()),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        location: format!("line {line}, row {rows}, column {j}"),
                        message: format!("non-finite cell `{}`", cell.trim()),
                    });
                }
                values.push(v);
                mask.push(1.0);
            }
        }
        rows += 1;
    }
    let cols = width.map(|w| w - skip).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(Error::Parse {
            location: "input".into(),
            message: "no data rows".into(),
        });
    }
    let ds = Dataset {
        matrix: Matrix::from_vec(rows, cols, values)?,
        row_labels: if options.row_labels {
            row_labels
        } else {
            (0..rows).map(|i| i.to_string()).collect()
        },
        col_labels: col_labels.unwrap_or_else(|| (0..cols).map(|j| j.to_string()).collect()),
        inherent_mask: Matrix::from_vec(rows, cols, mask)?,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, options).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV text; missing cells are written empty, values in shortest
/// round-trip decimal form.
pub fn write_csv_string(ds: &Dataset, options: &CsvOptions) -> String {
    let mut out = String::new();
    if options.header {
        let mut fields: Vec<String> = Vec::new();
        if options.row_labels {
            fields.push(String::new());
        }
        fields.extend(ds.col_labels.iter().map(|s| quote(s)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    for i in 0..ds.matrix.rows() {
        let mut fields: Vec<String> = Vec::with_capacity(ds.matrix.cols() + 1);
        if options.row_labels {
            fields.push(quote(&ds.row_labels[i]));
        }
        for j in 0..ds.matrix.cols() {
            if ds.inherent_mask[(i, j)] == 1.0 {
                fields.push(format!("{}", ds.matrix[(i, j)]));
            } else {
                fields.push(String::new());
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn save_csv(path: &Path, ds: &Dataset, options: &CsvOptions) -> Result<()> {
    std::fs::write(path, write_csv_string(ds, options))?;
    Ok(())
}
