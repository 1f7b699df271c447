//! MatrixMarket and CSV matrix files.
//!
//! Values are written with 17 significant digits so that a write/read cycle
//! reproduces every `f64` exactly. MatrixMarket `array` and `coordinate`
//! files are accepted on read; `array` is always emitted on write.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
}

impl MatrixFormat {
    /// Guess from the file extension: `.csv` is CSV, anything else MatrixMarket.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::MatrixMarket,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mtx" | "mm" | "matrixmarket" => Ok(MatrixFormat::MatrixMarket),
            "csv" => Ok(MatrixFormat::Csv),
            other => Err(Error::invalid(format!("unknown matrix format '{other}'"))),
        }
    }
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text, format)
}

pub fn write_matrix(m: &DenseMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    fs::write(path, format_matrix(m, format))?;
    Ok(())
}

pub fn parse_matrix(text: &str, format: MatrixFormat) -> Result<DenseMatrix> {
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(text),
        MatrixFormat::Csv => parse_csv(text),
    }
}

pub fn format_matrix(m: &DenseMatrix, format: MatrixFormat) -> String {
    match format {
        MatrixFormat::MatrixMarket => format_matrix_market(m),
        MatrixFormat::Csv => format_csv(m),
    }
}

fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_matrix_market(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    // array format is column-major
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push_str(&fmt_value(m[(i, j)]));
            out.push('\n');
        }
    }
    out
}

fn format_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| fmt_value(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_header(line: &str, lineno: usize) -> Result<(Layout, Symmetry)> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::parse(lineno, format!("malformed MatrixMarket header '{line}'")));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(Error::parse(lineno, format!("unsupported layout '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::parse(lineno, format!("unsupported field '{other}'"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(Error::parse(lineno, format!("unsupported symmetry '{other}'"))),
    };
    Ok((layout, symmetry))
}

fn parse_num<T: FromStr>(tok: &str, lineno: usize, what: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| Error::parse(lineno, format!("invalid {what} '{tok}'")))
}

fn parse_finite(tok: &str, lineno: usize) -> Result<f64> {
    let x: f64 = parse_num(tok, lineno, "value")?;
    if !x.is_finite() {
        return Err(Error::parse(lineno, format!("non-finite value '{tok}'")));
    }
    Ok(x)
}

fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file"))?;
    let (layout, symmetry) = parse_header(header, lineno)?;
    if symmetry != Symmetry::General && layout == Layout::Array {
        return Err(Error::parse(lineno, "symmetric array storage is not supported"));
    }

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (size_line, size) = data
        .next()
        .ok_or_else(|| Error::parse(lineno + 1, "missing size line"))?;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let expected_dims = if layout == Layout::Array { 2 } else { 3 };
    if dims.len() != expected_dims {
        return Err(Error::parse(size_line, format!("malformed size line '{size}'")));
    }
    let rows: usize = parse_num(dims[0], size_line, "row count")?;
    let cols: usize = parse_num(dims[1], size_line, "column count")?;
    let mut m = DMatrix::zeros(rows, cols);

    match layout {
        Layout::Array => {
            let mut count = 0usize;
            let mut last_line = size_line;
            for (ln, line) in data {
                last_line = ln;
                for tok in line.split_whitespace() {
                    if count >= rows * cols {
                        return Err(Error::parse(ln, "more entries than declared"));
                    }
                    m[(count % rows.max(1), count / rows.max(1))] = parse_finite(tok, ln)?;
                    count += 1;
                }
            }
            if count != rows * cols {
                return Err(Error::parse(
                    last_line,
                    format!("expected {} entries, found {count}", rows * cols),
                ));
            }
        }
        Layout::Coordinate => {
            let nnz: usize = parse_num(dims[2], size_line, "entry count")?;
            let mut count = 0usize;
            let mut last_line = size_line;
            for (ln, line) in data {
                last_line = ln;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(Error::parse(ln, format!("expected 'row col value', got '{line}'")));
                }
                let i: usize = parse_num(toks[0], ln, "row index")?;
                let j: usize = parse_num(toks[1], ln, "column index")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::parse(ln, format!("index ({i}, {j}) out of range")));
                }
                let x = parse_finite(toks[2], ln)?;
                m[(i - 1, j - 1)] += x;
                match symmetry {
                    Symmetry::Symmetric if i != j => m[(j - 1, i - 1)] += x,
                    Symmetry::SkewSymmetric if i != j => m[(j - 1, i - 1)] -= x,
                    _ => {}
                }
                count += 1;
            }
            if count != nnz {
                return Err(Error::parse(
                    last_line,
                    format!("declared {nnz} entries, found {count}"),
                ));
            }
        }
    }
    DenseMatrix::new(m)
}

fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::parse(
                    line,
                    format!("expected {c} columns, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for field in record.iter() {
            entries.push(parse_finite(field, line)?);
        }
        rows += 1;
    }
    DenseMatrix::from_row_major(rows, cols.unwrap_or(0), entries)
}
