//! CSV ingestion: comma-separated, UTF-8, one header row, numeric cells,
//! one designated response column.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::Read;
use std::path::Path;

/// A parsed dataset: feature matrix, response vector, and column names.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Names of the feature columns, in file order with the response removed.
    pub feature_names: Vec<String>,
    pub response_name: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// A parsed feature-only table (used for prediction queries).
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub column_names: Vec<String>,
    pub x: DMatrix<f64>,
}

fn csv_err(label: &str, detail: impl Into<String>) -> Error {
    Error::Csv {
        path: label.to_string(),
        detail: detail.into(),
    }
}

/// Parse a dataset with a response column from any reader. `label` names the
/// source in error messages.
pub fn parse_csv(reader: impl Read, response: &str, label: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| csv_err(label, format!("unreadable header row: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(csv_err(label, "empty header row"));
    }
    let response_idx = headers.iter().position(|h| h == response).ok_or_else(|| {
        csv_err(
            label,
            format!("response column '{response}' not found in header"),
        )
    })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != response_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(csv_err(label, "no feature columns besides the response"));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.map_err(|e| csv_err(label, format!("row at line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(csv_err(
                label,
                format!(
                    "row at line {line} has {} cells, expected {}",
                    record.len(),
                    headers.len()
                ),
            ));
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                csv_err(
                    label,
                    format!(
                        "non-numeric cell '{cell}' at line {line}, column '{}'",
                        &headers[j]
                    ),
                )
            })?;
            if !value.is_finite() {
                return Err(csv_err(
                    label,
                    format!("non-finite value at line {line}, column '{}'", &headers[j]),
                ));
            }
            if j == response_idx {
                ys.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(label, "no data rows after the header"));
    }

    let n = rows.len();
    let d = feature_names.len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    Ok(Dataset {
        feature_names,
        response_name: response.to_string(),
        x,
        y: DVector::from_vec(ys),
    })
}

/// Parse a feature-only table (no response column). An empty body yields a
/// zero-row matrix, which is valid for prediction queries.
pub fn parse_feature_csv(reader: impl Read, label: &str) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(label, format!("unreadable header row: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(csv_err(label, "empty header row"));
    }
    let column_names: Vec<String> = headers.iter().map(|h| h.to_string()).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_err(label, format!("row at line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(csv_err(
                label,
                format!(
                    "row at line {line} has {} cells, expected {}",
                    record.len(),
                    headers.len()
                ),
            ));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                csv_err(
                    label,
                    format!(
                        "non-numeric cell '{cell}' at line {line}, column '{}'",
                        &headers[j]
                    ),
                )
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    let d = column_names.len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    Ok(FeatureTable { column_names, x })
}

/// Load a dataset from a file path.
pub fn load_csv(path: &Path, response: &str) -> Result<Dataset> {
    let label = path.display().to_string();
    let file =
        std::fs::File::open(path).map_err(|e| csv_err(&label, format!("cannot open: {e}")))?;
    parse_csv(std::io::BufReader::new(file), response, &label)
}

/// Load a feature-only table from a file path.
pub fn load_feature_csv(path: &Path) -> Result<FeatureTable> {
    let label = path.display().to_string();
    let file =
        std::fs::File::open(path).map_err(|e| csv_err(&label, format!("cannot open: {e}")))?;
    parse_feature_csv(std::io::BufReader::new(file), &label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_fixture_round_trips() {
        let text = "a,b,y\n0.5,1.0,2.5\n0.25,-1.5,0.0\n1e-3,3.5,-7.25\n";
        let ds = parse_csv(text.as_bytes(), "y", "fixture").unwrap();
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.x.nrows(), 3);
        assert_eq!(ds.x[(0, 0)], 0.5);
        assert_eq!(ds.x[(2, 0)], 1e-3);
        assert_eq!(ds.y[0], 2.5);
        assert_eq!(ds.y[2], -7.25);
    }

    #[test]
    fn response_column_position_does_not_matter() {
        let first = parse_csv("y,a\n1.0,2.0\n3.0,4.0\n".as_bytes(), "y", "t").unwrap();
        assert_eq!(first.y[0], 1.0);
        assert_eq!(first.x[(0, 0)], 2.0);
    }

    #[test]
    fn header_only_file_is_an_error() {
        let err = parse_csv("a,b,y\n".as_bytes(), "y", "t").unwrap_err();
        assert!(err.to_string().contains("no data rows"));
    }

    #[test]
    fn missing_response_column_named_in_error() {
        let err = parse_csv("a,b\n1,2\n".as_bytes(), "zz", "t").unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn malformed_cell_names_row_and_column() {
        let err = parse_csv("a,y\n1.0,2.0\nfoo,3.0\n".as_bytes(), "y", "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("'a'"), "{msg}");
        assert!(msg.contains("foo"), "{msg}");
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = parse_csv("a,b,y\n1,2,3\n4,5\n".as_bytes(), "y", "t").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = load_csv(Path::new("/nonexistent/file.csv"), "y").unwrap_err();
        assert!(err.to_string().contains("cannot open"));
    }

    #[test]
    fn feature_table_allows_empty_body() {
        let t = parse_feature_csv("a,b\n".as_bytes(), "t").unwrap();
        assert_eq!(t.column_names, vec!["a", "b"]);
        assert_eq!(t.x.nrows(), 0);
    }

    #[test]
    fn parser_never_panics_on_garbage() {
        let samples: &[&[u8]] = &[
            b"",
            b"\xff\xfe\x00",
            b",,,\n,,,",
            b"a,b\n\"unterminated",
            b"y\n1\n2\n",
            b"a,y\nnan,1\n",
            b"a,y\ninf,1\n",
        ];
        for s in samples {
            let _ = parse_csv(*s, "y", "garbage");
            let _ = parse_feature_csv(*s, "garbage");
        }
    }
}
