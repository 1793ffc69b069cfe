//! Versioned CSV output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub const SCHEMA_LINE: &str = "# covertseq-csv v1";

/// `v` with 10 significant digits, shortest of fixed or scientific notation.
pub fn sig10(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One CSV cell.
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => sig10(*v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub struct CsvWriter {
    out: Box<dyn Write>,
}

impl CsvWriter {
    /// Writes the schema line, `comments` as `#` lines and the header.
    pub fn new(out: Box<dyn Write>, comments: &[String], header: &[&str]) -> io::Result<Self> {
        let mut w = Self { out };
        writeln!(w.out, "{SCHEMA_LINE}")?;
        for c in comments {
            writeln!(w.out, "# {c}")?;
        }
        writeln!(w.out, "{}", header.join(","))?;
        Ok(w)
    }

    pub fn row(&mut self, cells: Vec<Cell>) -> io::Result<()> {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Buffered file, or stdout when `path` is `None`.
pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(sig10(0.25), "0.25");
        assert_eq!(sig10(400.0), "400");
        assert_eq!(sig10(6.214608098422191), "6.214608098");
        assert_eq!(sig10(1.0 / 3.0), "0.3333333333");
        assert_eq!(sig10(1.5e-7), "1.5e-7");
        assert_eq!(sig10(-2.0e12), "-2e12");
        assert_eq!(sig10(0.0), "0");
        assert_eq!(sig10(f64::NAN), "nan");
    }
}
