use std::path::Path;

use csv::{Terminator, WriterBuilder};

use crate::Result;

/// A CSV table held as already-formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest representation that parses back to the same float.
pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}

/// Comma-separated, LF-terminated, with a header row.
pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|source| crate::CliError::Io { path: path.into(), source })?;
    Ok(())
}
