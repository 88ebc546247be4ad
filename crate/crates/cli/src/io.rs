//! Whitespace-separated decimal text formats.
//!
//! A table file starts with a `rows cols` header followed by `rows` lines of
//! `cols` entries. A vector file is a single line. Raw tokens are kept so the
//! exact-arithmetic checks can read the same decimals the user wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    pub values: Vec<f64>,
    pub tokens: Vec<String>,
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn number(tok: &str) -> Result<f64, String> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite entry `{tok}`")),
        Err(_) => Err(format!("malformed number `{tok}`")),
    }
}

pub fn parse_table(text: &str) -> Result<Table, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty file")?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let [r, c] = dims.as_slice() else {
        return Err(format!("header must be `rows cols`, got `{header}`"));
    };
    let rows: usize = r.parse().map_err(|_| format!("bad row count `{r}`"))?;
    let cols: usize = c.parse().map_err(|_| format!("bad column count `{c}`"))?;
    if rows == 0 || cols == 0 {
        return Err("dimensions must be positive".into());
    }
    let mut tokens = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| format!("expected {rows} rows, found {i}"))?;
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != cols {
            return Err(format!("row {i} has {} entries, expected {cols}", row.len()));
        }
        tokens.extend(row.into_iter().map(String::from));
    }
    if let Some(extra) = lines.next() {
        return Err(format!("trailing content after {rows} rows: `{extra}`"));
    }
    let values = tokens.iter().map(|t| number(t)).collect::<Result<_, _>>()?;
    Ok(Table {
        rows,
        cols,
        values,
        tokens,
    })
}

pub fn parse_vector(text: &str) -> Result<Vector, String> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let [line] = lines.as_slice() else {
        return Err(format!("expected a single line, found {}", lines.len()));
    };
    let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
    let values = tokens.iter().map(|t| number(t)).collect::<Result<Vec<_>, _>>()?;
    if let Some(j) = values.iter().position(|&v| v <= 0.0) {
        return Err(format!("entry {j} is not positive"));
    }
    Ok(Vector { values, tokens })
}

pub fn load_table(path: &Path) -> Result<Table, CliError> {
    parse_table(&read(path)?).map_err(|message| CliError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn load_vector(path: &Path) -> Result<Vector, CliError> {
    parse_vector(&read(path)?).map_err(|message| CliError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_table(rows: usize, cols: usize, row_major: &[f64]) -> String {
    let mut out = format!("{rows} {cols}\n");
    for i in 0..rows {
        out.push_str(&format_line(&row_major[i * cols..(i + 1) * cols]));
    }
    out
}

pub fn format_line(values: &[f64]) -> String {
    let mut out = String::new();
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
    out
}
