//! Output helpers: fixed-precision float formatting, CSV assembly and
//! JSON document writing.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Float rendered with 12 significant digits in scientific notation.
pub fn sig12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.11e}")
}

/// Simple in-memory CSV table.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// A CSV cell.
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
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
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "csv row width mismatch");
        self.rows.push(
            row.into_iter()
                .map(|c| match c {
                    Cell::F(v) => sig12(v),
                    Cell::I(v) => v.to_string(),
                    Cell::U(v) => v.to_string(),
                    Cell::S(s) => s,
                })
                .collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.render())?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(1.0), "1.00000000000e0");
        assert_eq!(sig12(-0.000123456789012345), "-1.23456789012e-4");
        assert_eq!(sig12(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_renders_header_and_rows() {
        let mut c = Csv::new(&["k", "psi"]);
        c.push(vec![3usize.into(), 0.5.into()]);
        assert_eq!(c.render(), "k,psi\n3,5.00000000000e-1\n");
    }
}
