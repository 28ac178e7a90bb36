//! Result export. Numbers print with 17 significant digits in CSV so the
//! files are lossless; JSON goes through serde_json, whose shortest
//! round-trip float encoding is lossless as well.

use super::IoError;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone)]
pub enum CsvCell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl CsvCell {
    fn render(&self) -> String {
        match self {
            CsvCell::Num(x) => format!("{:.16e}", x),
            CsvCell::Int(i) => i.to_string(),
            CsvCell::Text(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<CsvCell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<CsvCell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(CsvCell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_csv(path: &Path, table: &CsvTable) -> Result<(), IoError> {
    std::fs::write(path, table.render()).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("result types serialize");
    std::fs::write(path, text + "\n").map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_are_lossless() {
        let mut t = CsvTable::new(&["a", "b"]);
        let x = 1.0 / 3.0;
        t.push(vec![CsvCell::Num(x), CsvCell::Text("ok,quoted".into())]);
        let text = t.render();
        let line = text.lines().nth(1).unwrap();
        let first = line.split(',').next().unwrap();
        let parsed: f64 = first.parse().unwrap();
        assert_eq!(parsed, x);
        assert!(line.contains("\"ok,quoted\""));
    }
}
