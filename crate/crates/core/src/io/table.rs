use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One CSV field. Floats are written with 17 significant digits, so a
/// reread reproduces every bit of a finite value.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Float(a), Cell::Float(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Empty, Cell::Empty) => true,
            _ => false,
        }
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    /// Inverse of [`Cell::render`]: integers carry no exponent, floats
    /// always do (or are `NaN`/`inf`).
    pub fn parse(s: &str) -> Cell {
        if s.is_empty() {
            return Cell::Empty;
        }
        if let Ok(v) = s.parse::<i64>() {
            return Cell::Int(v);
        }
        match s.parse::<f64>() {
            Ok(v) if s.contains('e') || !v.is_finite() => Cell::Float(v),
            _ => Cell::Text(s.to_string()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Rows under a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.is_empty() {
            return Err(Error::config("output", format!("refusing to write an empty table to {}", path.display())));
        }
        let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Table> {
        let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let columns = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut table = Table { columns, rows: Vec::new() };
        for rec in r.records() {
            table.rows.push(rec.map_err(csv_err)?.iter().map(Cell::parse).collect());
        }
        Ok(table)
    }
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::config("output", format!("refusing to write no records to {}", path.display())));
    }
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| Error::config("output", e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_reread_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(["replica", "time", "value", "note"]);
        t.push(vec![0usize.into(), 0.1.into(), (1.0 / 3.0).into(), "a,b".into()]);
        t.push(vec![1usize.into(), 1e-300.into(), f64::MIN_POSITIVE.into(), Cell::Empty]);
        t.push(vec![2usize.into(), 2.0.into(), f64::INFINITY.into(), "x".into()]);
        t.write_csv(&path).unwrap();
        assert_eq!(Table::read_csv(&path).unwrap(), t);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
    }

    #[test]
    fn empty_outputs_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        assert!(Table::new(["a"]).write_csv(&path).is_err());
        assert!(!path.exists());
        assert!(write_jsonl::<u32>(&dir.path().join("e.jsonl"), &[]).is_err());
    }

    #[test]
    fn io_failures_name_the_path() {
        let mut t = Table::new(["a"]);
        t.push(vec![1usize.into()]);
        let bad = Path::new("/nonexistent-dir/x.csv");
        let msg = t.write_csv(bad).unwrap_err().to_string();
        assert!(msg.contains("/nonexistent-dir/x.csv"), "{msg}");
    }

    proptest! {
        #[test]
        fn float_cells_round_trip(v in proptest::num::f64::ANY) {
            let c = Cell::Float(v);
            prop_assert_eq!(Cell::parse(&c.render()), c);
        }
    }
}
