//! Result emission: one machine-readable `results.txt` per run (schema
//! header plus `key=value` records, floats at 17 significant digits),
//! plot-ready series files with documented columns, and a human summary.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Serialize a float with 17 significant digits, round-trip safe.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Default)]
pub struct Records {
    entries: Vec<(String, String)>,
}

impl Records {
    pub fn push_f64(&mut self, key: &str, v: f64) {
        self.entries.push((key.to_string(), fmt_f64(v)));
    }

    pub fn push_str(&mut self, key: &str, v: &str) {
        self.entries.push((key.to_string(), v.to_string()));
    }

    pub fn push_usize(&mut self, key: &str, v: usize) {
        self.entries.push((key.to_string(), v.to_string()));
    }

    pub fn push_bool(&mut self, key: &str, v: bool) {
        self.entries.push((key.to_string(), v.to_string()));
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = String::from("schema=1\n");
        for (k, v) in &self.entries {
            let _ = writeln!(text, "{k}={v}");
        }
        fs::write(path, text)
    }
}

/// Column-oriented series file; the header comment documents every column.
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "# columns: {}", self.columns.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(text, "{}", cells.join(" "));
        }
        fs::write(dir.join(&self.name), text)
    }
}

/// Everything a finished run wants on disk.
pub struct RunArtifacts {
    pub pass: bool,
    pub records: Records,
    pub series: Vec<Series>,
    pub summary: String,
}

impl RunArtifacts {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        self.records.write(&dir.join("results.txt"))?;
        for s in &self.series {
            s.write(dir)?;
        }
        fs::write(dir.join("summary.txt"), &self.summary)?;
        Ok(())
    }
}
