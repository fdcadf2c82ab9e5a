//! Artifact writing: CSV tables, JSON documents and the run manifest.
//!
//! Numbers go out with 12 significant digits in both formats and JSON keys
//! are sorted, so reruns with the same inputs produce the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// A JSON number with 12 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(round12(x))
    } else {
        Value::Null
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Builds a JSON object from `(key, value)` pairs. Keys end up sorted.
pub fn obj<I, K>(pairs: I) -> Value
where
    I: IntoIterator<Item = (K, Value)>,
    K: Into<String>,
{
    let sorted: BTreeMap<String, Value> = pairs.into_iter().map(|(k, v)| (k.into(), v)).collect();
    Value::Object(sorted.into_iter().collect::<Map<_, _>>())
}

/// Recursively sorts object keys.
fn sorted(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let b: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, sorted(v))).collect();
            Value::Object(b.into_iter().map(|(k, v)| (k.clone(), v)).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

pub fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&sorted(v)).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// A numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.11e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Collects the files a command writes into one output directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        self.write(name, &table.csv())
    }

    pub fn json(&mut self, name: &str, v: &Value) -> Result<PathBuf> {
        self.write(name, &json_text(v))
    }

    /// Relative names of everything written so far, sorted.
    pub fn files(&self) -> Vec<String> {
        let mut f = self.files.clone();
        f.sort();
        f
    }
}

/// What a run produced, without anything that varies between reruns.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub checks: BTreeMap<String, bool>,
    pub pass: bool,
}

impl RunManifest {
    pub fn to_json(&self) -> Value {
        obj([
            ("command", Value::from(self.command.clone())),
            (
                "config",
                self.config.clone().map(Value::from).unwrap_or(Value::Null),
            ),
            ("seed", Value::from(self.seed)),
            ("tool", Value::from("fracvar")),
            ("version", Value::from(self.version.clone())),
            (
                "outputs",
                Value::Array(self.outputs.iter().cloned().map(Value::from).collect()),
            ),
            (
                "checks",
                obj(self.checks.iter().map(|(k, v)| (k.clone(), Value::Bool(*v)))),
            ),
            ("pass", Value::Bool(self.pass)),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(round12(std::f64::consts::PI), 3.14159265359);
        assert_eq!(round12(0.0), 0.0);
        assert_eq!(num(f64::NAN), Value::Null);
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, -2.5e-7]);
        assert_eq!(t.csv(), "a,b\n1.00000000000e0,-2.50000000000e-7\n");
    }

    #[test]
    fn keys_sorted_recursively() {
        let v = obj([("b", obj([("z", num(1.0)), ("a", num(2.0))])), ("a", Value::Null)]);
        let text = json_text(&v);
        let a = text.find("\"a\"").unwrap();
        let b = text.find("\"b\"").unwrap();
        assert!(a < b);
        let inner: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(inner["b"]["a"], num(2.0));
        assert!(text.find("\"a\": 2").unwrap() < text.find("\"z\"").unwrap());
    }

    #[test]
    fn manifest_lists_files_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        a.json("x.json", &num(1.0)).unwrap();
        a.csv("b.csv", &Table::new(&["c"])).unwrap();
        a.json("x.json", &num(2.0)).unwrap();
        assert_eq!(a.files(), vec!["b.csv".to_string(), "x.json".to_string()]);
    }
}
