//! Line-oriented reader/writer helpers shared by the plain-text model formats.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Cursor over non-empty, non-comment lines, keeping 1-based line numbers for
/// error messages.
pub(crate) struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Lines { lines, pos: 0 }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.lines
            .get(self.pos)
            .or_else(|| self.lines.last())
            .map_or(0, |(n, _)| *n)
    }

    pub(crate) fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse { line: self.line_no(), reason: reason.into() }
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.get(self.pos) {
            Some((_, l)) => {
                self.pos += 1;
                Ok(*l)
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    /// Consumes a line that must start with `keyword`; returns the remaining tokens.
    pub(crate) fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == keyword => Ok(toks.collect()),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected `{keyword}`, found `{}`", other.unwrap_or(""))))
            }
        }
    }

    pub(crate) fn parse_tok<T: FromStr>(&self, tok: Option<&&str>, what: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse {what} from `{tok}`")))
    }

    pub(crate) fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|_| {
            Error::Parse { line: self.lines[self.pos - 1].0, reason: "bad number".into() }
        })?;
        if vals.len() != n {
            return Err(Error::Parse {
                line: self.lines[self.pos - 1].0,
                reason: format!("expected {n} values, found {}", vals.len()),
            });
        }
        Ok(vals)
    }

    /// Reads a `matrix <rows> <cols>` header followed by one line per row.
    pub(crate) fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let toks = self.expect(name)?;
        let rows: usize = self.parse_tok(toks.first(), "row count")?;
        let cols: usize = self.parse_tok(toks.get(1), "column count")?;
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let row = self.floats(cols)?;
            for (c, v) in row.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }
}

pub(crate) fn write_row(out: &mut String, vals: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(' ');
        }
        first = false;
        // `{}` on f64 prints the shortest representation that round-trips.
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub(crate) fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        write_row(out, m.row(r).iter().copied());
    }
}
