//! CSV ingestion and the JSON reports written by the CLI.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ShredError;

/// Field values treated as missing.
const MISSING: [&str; 6] = ["", "NA", "NaN", "nan", "null", "NULL"];

/// A numeric table split into predictors and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    /// Predictor names in column order; index `i` is predictor `i`.
    pub names: Vec<String>,
    pub response: String,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub rows_read: usize,
    /// Rows dropped because some field was missing.
    pub rows_dropped: usize,
}

impl CsvData {
    pub fn from_path(path: &Path, response: &str) -> Result<Self, ShredError> {
        let file = std::fs::File::open(path).map_err(|e| ShredError::io(path, e))?;
        Self::from_reader(file, response)
    }

    pub fn from_reader<R: Read>(reader: R, response: &str) -> Result<Self, ShredError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.is_empty() || header.iter().all(str::is_empty) {
            return Err(ShredError::Input("CSV input has no header row".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &header {
            if !seen.insert(name) {
                return Err(ShredError::Input(format!("duplicate column `{name}`")));
            }
        }
        let target = header
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| ShredError::Input(format!("response column `{response}` not found")))?;
        let names: Vec<String> =
            header.iter().enumerate().filter(|&(i, _)| i != target).map(|(_, h)| h.to_string()).collect();
        if names.is_empty() {
            return Err(ShredError::Input("no predictor columns besides the response".into()));
        }

        let p = names.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
        let mut y = Vec::new();
        let mut rows_read = 0;
        let mut rows_dropped = 0;
        let mut row = Vec::with_capacity(p + 1);
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            rows_read += 1;
            if record.iter().any(|f| MISSING.contains(&f)) {
                rows_dropped += 1;
                continue;
            }
            row.clear();
            for (i, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| {
                    ShredError::Input(format!(
                        "column `{}`, data row {rows_read}: `{field}` is not a number",
                        &header[i]
                    ))
                })?;
                if !value.is_finite() {
                    return Err(ShredError::Input(format!(
                        "column `{}`, data row {rows_read}: `{field}` is not finite",
                        &header[i]
                    )));
                }
                row.push(value);
            }
            let mut k = 0;
            for (i, &v) in row.iter().enumerate() {
                if i == target {
                    y.push(v);
                } else {
                    columns[k].push(v);
                    k += 1;
                }
            }
        }
        let n = y.len();
        let x = DMatrix::from_iterator(n, p, columns.into_iter().flatten());
        Ok(CsvData { names, response: response.to_string(), x, y, rows_read, rows_dropped })
    }

    pub fn names_of(&self, members: &[usize]) -> Vec<String> {
        members.iter().map(|&i| self.names[i].clone()).collect()
    }
}

fn csv_error(e: csv::Error) -> ShredError {
    ShredError::Input(format!("malformed CSV: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSet {
    pub node: usize,
    pub columns: Vec<String>,
    pub p_value: f64,
    pub weight: f64,
}

/// Output of `shred select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub response: String,
    pub family: String,
    pub rule: String,
    pub procedure: String,
    pub q: f64,
    pub alpha: f64,
    pub c_max: f64,
    pub guaranteed: bool,
    pub linkage: String,
    pub corr_cut: Option<f64>,
    pub seed: u64,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub hypotheses: usize,
    pub rejected: usize,
    /// σ of the rejected set.
    pub discoveries: f64,
    pub selected: Vec<SelectedSet>,
}

impl SelectReport {
    /// Aligned text table of the selected sets.
    pub fn table(&self) -> String {
        let mut out = format!(
            "rule {} ({}), q = {}, alpha = {:.4}, c_max = {:.6e}\n",
            self.rule, self.procedure, self.q, self.alpha, self.c_max
        );
        if !self.guaranteed {
            out.push_str("note: this slope carries no gFDR guarantee\n");
        }
        out.push_str(&format!(
            "{} rows used, {} dropped for missing values; {} of {} hypotheses rejected, {:.4} discoveries\n",
            self.rows_used, self.rows_dropped, self.rejected, self.hypotheses, self.discoveries
        ));
        if self.selected.is_empty() {
            out.push_str("no sets selected\n");
            return out;
        }
        let width = self.selected.iter().map(|s| s.columns.join(", ").len() + 2).max().unwrap_or(0).max(3);
        out.push_str(&format!("{:<width$}  {:>12}  {:>8}\n", "set", "p-value", "weight"));
        for s in &self.selected {
            let set = format!("{{{}}}", s.columns.join(", "));
            out.push_str(&format!("{set:<width$}  {:>12.4e}  {:>8.4}\n", s.p_value, s.weight));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyViolation {
    /// Index of the generated tree.
    pub tree: usize,
    pub leaves: usize,
    pub kind: String,
    /// Node ids of the upsets that witness the violation.
    pub upsets: Vec<Vec<usize>>,
    pub detail: String,
}

/// Output of `shred verify`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trees_checked: usize,
    pub leaves_max: usize,
    pub seed: u64,
    pub upsets_checked: usize,
    pub collections_checked: usize,
    pub violations: Vec<VerifyViolation>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_missing_rows_and_splits_response() {
        let csv = "a,y,b\n1,2,3\n4,NA,6\n7,8,\n10,11,12\n";
        let d = CsvData::from_reader(csv.as_bytes(), "y").unwrap();
        assert_eq!(d.names, ["a", "b"]);
        assert_eq!(d.rows_read, 4);
        assert_eq!(d.rows_dropped, 2);
        assert_eq!(d.y, [2.0, 11.0]);
        assert_eq!(d.x.column(1).as_slice(), &[3.0, 12.0]);
    }

    #[test]
    fn errors_name_the_column() {
        let err = CsvData::from_reader("a,y\n1,2\n".as_bytes(), "z").unwrap_err();
        assert!(err.to_string().contains("`z`"));
        let err = CsvData::from_reader("a,y\nfoo,2\n".as_bytes(), "y").unwrap_err();
        assert!(err.to_string().contains("`a`"));
        assert_eq!(err.exit_code(), 2);
        let err = CsvData::from_reader("a,a,y\n1,2,3\n".as_bytes(), "y").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn quoted_fields() {
        let csv = "\"x, one\",y\n\"1.5\",2\n";
        let d = CsvData::from_reader(csv.as_bytes(), "y").unwrap();
        assert_eq!(d.names, ["x, one"]);
        assert_eq!(d.x[(0, 0)], 1.5);
    }
}
