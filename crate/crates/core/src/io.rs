//! Tabular input: numeric CSV with a header row, and `lo:hi` bound lists.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::privacy::Bounds;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    /// One row per observation.
    pub data: DMatrix<f64>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.header.len()
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }
}

/// Parse a numeric CSV. The first row is a header; every later row must have
/// one finite number per header column. Errors carry 1-based row and column
/// numbers counted from the header row.
pub fn parse_csv_table(input: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { row: 1, column: 0, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse { row: 1, column: 0, message: "missing header row".into() });
    }
    let width = header.len();
    let mut values = Vec::new();
    let mut nrows = 0;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Parse { row, column: 0, message: e.to_string() })?;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: c + 1, message: "value is not finite".into() });
            }
            values.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(Error::Parse { row: 2, column: 0, message: "no data rows".into() });
    }
    Ok(Table { header, data: DMatrix::from_row_slice(nrows, width, &values) })
}

pub fn read_csv_table(path: &Path) -> Result<Table> {
    parse_csv_table(&std::fs::read_to_string(path)?)
}

/// Parse `lo:hi` (applied to all `dim` coordinates) or a comma-separated list
/// of exactly `dim` such pairs.
pub fn parse_bounds(spec: &str, dim: usize) -> Result<Bounds> {
    let pairs: Vec<(f64, f64)> = spec
        .split(',')
        .map(|item| {
            let (lo, hi) = item
                .split_once(':')
                .ok_or_else(|| Error::param(format!("bound {item:?} is not of the form lo:hi")))?;
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| Error::param(format!("bound {item:?} is not numeric")))
            };
            Ok((num(lo)?, num(hi)?))
        })
        .collect::<Result<_>>()?;
    let pairs = match pairs.len() {
        1 => vec![pairs[0]; dim],
        len if len == dim => pairs,
        len => return Err(Error::param(format!("got {len} bounds for {dim} columns"))),
    };
    Bounds::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_table() {
        let t = parse_csv_table("a,b\n1,2\n3.5,-4\n").unwrap();
        assert_eq!(t.header, vec!["a", "b"]);
        assert_eq!(t.data, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.5, -4.0]));
    }

    #[test]
    fn reports_row_and_column() {
        match parse_csv_table("a,b\n1,2\n3,x\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv_table("a,b\n1,2,3\n") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv_table("a,b\n").is_err());
        assert!(parse_csv_table("").is_err());
        assert!(parse_csv_table("a\nNaN\n").is_err());
    }

    #[test]
    fn bounds_forms() {
        let b = parse_bounds("-5:5", 3).unwrap();
        assert_eq!(b.lower(), &[-5.0; 3]);
        let b = parse_bounds("0:1, -2:2", 2).unwrap();
        assert_eq!(b.upper(), &[1.0, 2.0]);
        assert!(parse_bounds("0:1,0:1", 3).is_err());
        assert!(parse_bounds("1:0", 1).is_err());
        assert!(parse_bounds("0-1", 1).is_err());
        assert!(parse_bounds("a:1", 1).is_err());
    }
}
