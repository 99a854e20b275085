//! CSV/JSON writers. Floats carry 17 significant digits.

use qpdual::lattice::{LatticeVector, SiteSet};
use qpdual::{QpError, Result};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

pub fn f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Coordinates joined by ';' so they fit in one CSV field.
pub fn site(n: &LatticeVector) -> String {
    n.0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

pub fn site_json(n: &LatticeVector) -> Value {
    json!(n.0)
}

pub fn set_json(s: &SiteSet) -> Value {
    Value::Array(s.iter().map(site_json).collect())
}

pub fn sites_json(s: &[LatticeVector]) -> Value {
    Value::Array(s.iter().map(site_json).collect())
}

/// `# name: meaning` lines, then the header row, then the rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(title: &str, columns: &[(&str, &str)]) -> Self {
        let mut text = format!("# {title}\n");
        for (name, doc) in columns {
            let _ = writeln!(text, "# {name}: {doc}");
        }
        let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
        text.push_str(&names.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        write_text(dir, name, &self.text)
    }
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| QpError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| QpError::Invalid(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("json values serialize");
    text.push('\n');
    write_text(dir, name, &text)
}
