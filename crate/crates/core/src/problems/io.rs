//! Text dataset readers.
//!
//! * LIBSVM: `label idx:val idx:val ...` with 1-based, strictly increasing
//!   indices. Blank lines and lines starting with `#` are skipped, as is
//!   anything after a `#` on a data line.
//! * CSV: `label,f1,...,fn` with no header; every row has the same width.
//!
//! Errors carry the 1-based line and column of the offending token.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{Dataset, Features};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub source: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.source, self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Splits on whitespace, keeping 1-based start columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            return None;
        }
        let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        let tok = &trimmed[..end];
        let col = offset + 1;
        offset += end;
        rest = &trimmed[end..];
        Some((col, tok))
    })
}

fn parse_value(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses LIBSVM text. When `dim` is `None` the dimension is the largest index seen.
pub fn parse_libsvm(text: &str, source: &str, dim: Option<usize>) -> Result<Dataset, ParseError> {
    let err = |line: usize, column: usize, message: String| ParseError {
        source: source.to_string(),
        line,
        column,
        message,
    };
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("");
        let mut toks = tokens(line);
        let Some((col, label)) = toks.next() else { continue };
        let label = parse_value(label).ok_or_else(|| err(ln, col, format!("invalid label `{label}`")))?;
        let mut prev = 0;
        for (col, tok) in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(ln, col, format!("expected `index:value`, found `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(ln, col, format!("invalid feature index `{idx}`")))?;
            if idx == 0 {
                return Err(err(ln, col, "feature indices are 1-based; found 0".into()));
            }
            if idx <= prev {
                return Err(err(ln, col, format!("feature index {idx} is not greater than {prev}")));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(err(ln, col, format!("feature index {idx} exceeds dimension {d}")));
                }
            }
            let val = parse_value(val)
                .ok_or_else(|| err(ln, col + tok.find(':').unwrap() + 1, format!("invalid feature value `{val}`")))?;
            prev = idx;
            max_idx = max_idx.max(idx);
            indices.push(idx - 1);
            values.push(val);
        }
        indptr.push(indices.len());
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(err(1, 1, "no samples".into()));
    }
    let features = Features::Sparse { dim: dim.unwrap_or(max_idx), indptr, indices, values };
    Ok(Dataset { features, labels, provenance: source.to_string() })
}

/// Parses headerless `label,f1,...,fn` rows into dense storage.
pub fn parse_csv(text: &str, source: &str) -> Result<Dataset, ParseError> {
    let err = |line: usize, column: usize, message: String| ParseError {
        source: source.to_string(),
        line,
        column,
        message,
    };
    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut col = 1;
        let mut fields = 0;
        for (k, field) in raw.split(',').enumerate() {
            let v = parse_value(field.trim())
                .ok_or_else(|| err(ln, col, format!("invalid number `{}`", field.trim())))?;
            if k == 0 {
                labels.push(v);
            } else {
                values.push(v);
            }
            col += field.len() + 1;
            fields += 1;
        }
        match width {
            None if fields < 2 => return Err(err(ln, 1, "expected a label and at least one feature".into())),
            None => width = Some(fields),
            Some(w) if w != fields => {
                return Err(err(ln, col - 1, format!("expected {w} fields, found {fields}")));
            }
            _ => {}
        }
    }
    let Some(width) = width else {
        return Err(err(1, 1, "no samples".into()));
    };
    let features = Features::Dense { dim: width - 1, values };
    Ok(Dataset { features, labels, provenance: source.to_string() })
}

#[derive(Debug)]
pub enum ReadError {
    Io(std::io::Error),
    Parse(ParseError),
}

impl fmt::Display for ReadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReadError::Io(e) => write!(f, "{e}"),
            ReadError::Parse(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ReadError {}

pub fn read_dataset(path: &Path, format: DataFormat, dim: Option<usize>) -> Result<Dataset, ReadError> {
    let text = std::fs::read_to_string(path).map_err(ReadError::Io)?;
    let source = path.display().to_string();
    match format {
        DataFormat::Libsvm => parse_libsvm(&text, &source, dim),
        DataFormat::Csv => parse_csv(&text, &source),
    }
    .map_err(ReadError::Parse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_basic() {
        let ds = parse_libsvm("+1 1:0.5 3:2\n\n# comment\n-1 2:1 # trailing\n", "t", None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.labels, vec![1.0, -1.0]);
        assert_eq!(ds.features.row_dot(0, &[1.0, 1.0, 1.0]), 2.5);
        assert_eq!(ds.features.row(1).collect::<Vec<_>>(), vec![(1, 1.0)]);
    }

    #[test]
    fn libsvm_errors_cite_position() {
        let e = parse_libsvm("1 1:1\n1 2:x\n", "d.svm", None).unwrap_err();
        assert_eq!((e.line, e.column), (2, 5));
        assert!(e.to_string().starts_with("d.svm:2:5:"));
        let e = parse_libsvm("1 0:1\n", "d", None).unwrap_err();
        assert_eq!((e.line, e.column), (1, 3));
        let e = parse_libsvm("1 3:1 2:1\n", "d", None).unwrap_err();
        assert_eq!((e.line, e.column), (1, 7));
        let e = parse_libsvm("1 1:1\n1 5:1\n", "d", Some(4)).unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_libsvm("x 1:1\n", "d", None).unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
        let e = parse_libsvm("1 1-1\n", "d", None).unwrap_err();
        assert!(e.message.contains("index:value"));
    }

    #[test]
    fn csv_basic_and_errors() {
        let ds = parse_csv("1,0.5,2\n-1, 1 ,0\n", "c").unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, vec![1.0, -1.0]);
        let e = parse_csv("1,2,3\n1,2\n", "c").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_csv("1,2,3\n1,2,oops\n", "c").unwrap_err();
        assert_eq!((e.line, e.column), (2, 5));
        assert!(parse_csv("", "c").is_err());
    }
}
