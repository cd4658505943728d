//! Tabular output shared by all CLI subcommands.
//!
//! A [`ReportTable`] is a column list plus typed rows; the writers render it
//! as CSV (RFC 4180 quoting via the `csv` crate) or as a JSON array of
//! objects. Rendering is deterministic: equal tables produce identical
//! bytes.

use std::io::{self, Write};

use serde_json::{json, Map, Value};

/// One table cell. Numbers keep their type so JSON output stays numeric.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    UInt(u64),
    Float(f64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::UInt(u) => u.to_string(),
            Cell::Float(x) => format!("{x}"),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => json!(s),
            Cell::UInt(u) => json!(u),
            // Non-finite floats have no JSON number form.
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<u64> for Cell {
    fn from(u: u64) -> Self {
        Cell::UInt(u)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl ReportTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        ReportTable { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    /// Appends a row; the cell count must match the column count.
    pub fn push_row(&mut self, row: impl IntoIterator<Item = Cell>) {
        let row: Vec<Cell> = row.into_iter().collect();
        assert_eq!(row.len(), self.columns.len(), "row width must match columns");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.columns)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(Cell::render))?;
        }
        csv.flush()
    }

    /// JSON array of one object per row. Keys follow column order.
    pub fn write_json<W: Write>(&self, mut w: W) -> io::Result<()> {
        let array: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    obj.insert(col.clone(), cell.to_json());
                }
                Value::Object(obj)
            })
            .collect();
        serde_json::to_writer_pretty(&mut w, &array)?;
        writeln!(w)
    }
}
