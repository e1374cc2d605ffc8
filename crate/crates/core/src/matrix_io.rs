//! Text matrix format shared by every tool.
//!
//! ```text
//! # rows=<R> cols=<C> field=<real|complex>
//! v11,v12,...          (real: C values per line)
//! re11,im11,re12,...   (complex: 2C values per line)
//! ```
//!
//! Values are written with 17 significant digits so every `f64` survives a
//! write/read cycle bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Real,
    Complex,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Real => "real",
            FieldKind::Complex => "complex",
        }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(FieldKind::Real),
            "complex" => Ok(FieldKind::Complex),
            other => Err(Error::Validation(format!("unknown field kind `{other}`"))),
        }
    }
}

fn fmt_f64(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

/// Renders a matrix. With `FieldKind::Real` imaginary parts are dropped.
pub fn format_matrix(m: &CMatrix, field: FieldKind) -> String {
    let mut out = String::with_capacity(m.len() * 48 + 64);
    let _ = writeln!(
        out,
        "# rows={} cols={} field={}",
        m.nrows(),
        m.ncols(),
        field.as_str()
    );
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let z = m[(i, j)];
            fmt_f64(&mut out, z.re);
            if field == FieldKind::Complex {
                out.push(',');
                fmt_f64(&mut out, z.im);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, m: &CMatrix, field: FieldKind) -> Result<()> {
    fs::write(path, format_matrix(m, field))?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize, FieldKind)> {
    let bad = |detail: String| Error::Parse { line: 1, detail };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| bad("header must start with `#`".into()))?;
    let (mut rows, mut cols, mut field) = (None, None, None);
    for tok in body.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header token `{tok}`")))?;
        match key {
            "rows" => rows = value.parse::<usize>().ok(),
            "cols" => cols = value.parse::<usize>().ok(),
            "field" => field = value.parse::<FieldKind>().ok(),
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }
    match (rows, cols, field) {
        (Some(r), Some(c), Some(f)) => Ok((r, c, f)),
        _ => Err(bad(
            "header must declare rows=<R> cols=<C> field=<real|complex>".into(),
        )),
    }
}

/// Parses the matrix format.
pub fn parse_matrix(text: &str) -> Result<(CMatrix, FieldKind)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        detail: "empty file".into(),
    })?;
    let (rows, cols, field) = parse_header(header.trim())?;
    let per_row = match field {
        FieldKind::Real => cols,
        FieldKind::Complex => 2 * cols,
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (offset, raw) in lines.enumerate() {
        let line_no = offset + 2;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if seen == rows {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("more than the declared {rows} rows"),
            });
        }
        let values = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    detail: format!("invalid number `{}`", tok.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != per_row {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("ragged row: expected {per_row} values, found {}", values.len()),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("non-finite entry `{bad}`"),
            });
        }
        match field {
            FieldKind::Real => data.extend(values.into_iter().map(|x| Complex64::new(x, 0.0))),
            FieldKind::Complex => data.extend(
                values
                    .chunks_exact(2)
                    .map(|p| Complex64::new(p[0], p[1])),
            ),
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse {
            line: seen + 2,
            detail: format!("ragged file: expected {rows} rows, found {seen}"),
        });
    }
    Ok((CMatrix::from_row_slice(rows, cols, &data), field))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(CMatrix, FieldKind)> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Index files hold one 1-based index per line, in selection order.
pub fn format_indices(one_based: &[usize]) -> String {
    one_based.iter().map(|i| format!("{i}\n")).collect()
}

pub fn parse_indices(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                detail: format!("invalid index `{}`", l.trim()),
            })
        })
        .collect()
}
