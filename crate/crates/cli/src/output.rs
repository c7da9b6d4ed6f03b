use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::CliError;

enum Table {
    Csv { header: Vec<String>, rows: Vec<Vec<String>> },
    Json(Value),
}

/// Auxiliary files written next to the result envelope.
#[derive(Default)]
pub struct Tables {
    files: Vec<(String, Table)>,
}

impl Tables {
    pub fn add(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let header = header.iter().map(|s| s.to_string()).collect();
        self.files.push((name.into(), Table::Csv { header, rows }));
    }

    pub fn add_json(&mut self, name: &str, v: Value) {
        self.files.push((name.into(), Table::Json(v)));
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        for (name, t) in &self.files {
            let path = dir.join(name);
            match t {
                Table::Csv { header, rows } => {
                    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    let res = w.write_record(header).and_then(|_| rows.iter().try_for_each(|r| w.write_record(r)));
                    res.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    w.flush().map_err(io)?;
                }
                Table::Json(v) => write_json(&path, v)?,
            }
        }
        Ok(())
    }
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
