//! File formats.
//!
//! * Matrices and vectors: comma-separated numeric CSV with an optional
//!   header row, detected as a first row that does not parse as numbers.
//! * Groups: JSON, either an array of arrays of 1-based column indices or
//!   `{"groups": [[...], ...], "weights": [...]}`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{GroupStructure, WeightRule};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a rectangular numeric table. `path` is only used in messages.
pub fn read_table<R: Read>(reader: R, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, usize> = rec
            .iter()
            .enumerate()
            .map(|(c, f)| f.parse::<f64>().map_err(|_| c))
            .collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && width.is_none() => {
                // Header row.
                width = Some(rec.len());
                continue;
            }
            Err(c) => {
                return Err(parse_err(
                    path,
                    line,
                    format!("column {}: cannot parse {:?} as a number", c + 1, &rec[c]),
                ))
            }
        };
        if let Some(c) = values.iter().position(|v| !v.is_finite()) {
            return Err(parse_err(path, line, format!("column {}: non-finite value", c + 1)));
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {w} fields, found {}", values.len()),
                ))
            }
            _ => width = Some(values.len()),
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no numeric rows"));
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_table(open(path)?, path)?;
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Reads a single-column CSV, or a single row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let rows = read_table(open(path)?, path)?;
    if rows[0].len() == 1 {
        Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[0])))
    } else if rows.len() == 1 {
        Ok(DVector::from_vec(rows[0].clone()))
    } else {
        Err(parse_err(
            path,
            1,
            format!("expected one column, found {}", rows[0].len()),
        ))
    }
}

pub fn write_vector<W: Write>(out: W, v: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for x in v {
        w.write_record([format!("{x:e}")])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn write_matrix<W: Write>(out: W, x: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in x.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroupsJson {
    Plain(Vec<Vec<usize>>),
    Weighted {
        groups: Vec<Vec<usize>>,
        weights: Option<Vec<f64>>,
    },
}

/// Parsed group file: 0-based groups and optional explicit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub groups: Vec<Vec<usize>>,
    pub weights: Option<Vec<f64>>,
}

impl GroupSpec {
    /// Builds the structure, using `rule` when the file carries no weights.
    pub fn build(self, p: usize, rule: WeightRule) -> Result<GroupStructure> {
        match self.weights {
            Some(w) => GroupStructure::new(p, self.groups, w),
            None => GroupStructure::with_rule(p, self.groups, rule),
        }
    }
}

pub fn parse_groups(text: &str, path: &Path) -> Result<GroupSpec> {
    let parsed: GroupsJson = serde_json::from_str(text).map_err(|e| {
        parse_err(
            path,
            e.line(),
            format!("expected an array of 1-based index arrays or {{\"groups\", \"weights\"}}: {e}"),
        )
    })?;
    let (groups, weights) = match parsed {
        GroupsJson::Plain(g) => (g, None),
        GroupsJson::Weighted { groups, weights } => (groups, weights),
    };
    let mut zero_based = Vec::with_capacity(groups.len());
    for (l, g) in groups.into_iter().enumerate() {
        let mut out = Vec::with_capacity(g.len());
        for j in g {
            if j == 0 {
                return Err(parse_err(
                    path,
                    1,
                    format!("group {}: column indices are 1-based, found 0", l + 1),
                ));
            }
            out.push(j - 1);
        }
        zero_based.push(out);
    }
    if let Some(w) = &weights {
        if w.len() != zero_based.len() {
            return Err(parse_err(
                path,
                1,
                format!("{} groups but {} weights", zero_based.len(), w.len()),
            ));
        }
    }
    Ok(GroupSpec {
        groups: zero_based,
        weights,
    })
}

pub fn read_groups(path: &Path) -> Result<GroupSpec> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    parse_groups(&text, path)
}

/// Reads a JSON array of weights.
pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let reader = open(path)?;
    serde_json::from_reader(reader).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Result<Vec<Vec<f64>>> {
        read_table(text.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn header_is_optional() {
        let a = table("a,b\n1,2\n3,4\n").unwrap();
        let b = table("1,2\n3,4\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(table(" 1.5 , -2e3\n").unwrap(), vec![vec![1.5, -2000.0]]);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        match table("x,y\n1,2\n3,oops\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match table("1,2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(table("1,NaN\n").is_err());
        assert!(table("h\n").is_err());
    }

    #[test]
    fn groups_both_forms() {
        let p = Path::new("g.json");
        let g = parse_groups("[[1,2],[3]]", p).unwrap();
        assert_eq!(g.groups, vec![vec![0, 1], vec![2]]);
        assert_eq!(g.weights, None);
        let g = parse_groups(r#"{"groups": [[2],[1,3]], "weights": [1.0, 2.5]}"#, p).unwrap();
        assert_eq!(g.groups, vec![vec![1], vec![0, 2]]);
        let gs = g.build(3, WeightRule::Unit).unwrap();
        assert_eq!(gs.weights(), &[1.0, 2.5]);
        assert!(parse_groups("[[0,1]]", p).is_err());
        assert!(parse_groups(r#"{"groups": [[1]], "weights": [1, 2]}"#, p).is_err());
        assert!(parse_groups("{", p).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let v = [1.0, -2.5e-17, 3.0e8, 0.1 + 0.2];
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, &buf).unwrap();
        let back = read_vector(&path).unwrap();
        assert_eq!(back.as_slice(), &v);
    }
}
