//! Output tables, run manifests, and flag-value parsing.
//!
//! Every output file starts with its manifest as a `#`-prefixed JSON
//! comment, then a header row, then data rows. Manifests record the
//! command, its full parameter set, and seeds, but never wall-clock time
//! or thread count, so repeated runs with identical flags produce
//! bit-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

pub struct RunManifest {
    command: &'static str,
    params: Map<String, Value>,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            params: Map::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("tool".into(), Value::from("araim"));
        map.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        map.insert("command".into(), Value::from(self.command));
        // alphabetical parameter order keeps the serialization stable
        let mut sorted: Vec<(&String, &Value)> = self.params.iter().collect();
        sorted.sort_by_key(|(k, _)| k.as_str());
        let mut params = Map::new();
        for (k, v) in sorted {
            params.insert(k.clone(), v.clone());
        }
        map.insert("params".into(), Value::Object(params));
        Value::Object(map)
    }
}

/// Writes a CSV table with an embedded manifest comment line.
pub fn write_table(
    path: &Path,
    manifest: &RunManifest,
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    let mut out = String::new();
    writeln!(out, "# manifest: {}", manifest.to_json()).expect("string write");
    writeln!(out, "{}", header.join(",")).expect("string write");
    for row in rows {
        writeln!(out, "{}", row.join(",")).expect("string write");
    }
    std::fs::write(path, out)
}

/// Writes a JSON summary document carrying the manifest alongside results.
pub fn write_summary(path: &Path, manifest: &RunManifest, results: Value) -> std::io::Result<()> {
    let doc = serde_json::json!({
        "manifest": manifest.to_json(),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    std::fs::write(path, text)
}

/// Sibling path with the extension replaced, e.g. `pfa.csv` -> `pfa.summary.json`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Parses a sample count that may use scientific notation ("5e8").
pub fn parse_count(text: &str) -> Result<u64, String> {
    if let Ok(v) = text.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = text
        .parse()
        .map_err(|_| format!("'{text}' is not a count"))?;
    if !v.is_finite() || v < 0.0 || v > u64::MAX as f64 {
        return Err(format!("count '{text}' out of range"));
    }
    if (v - v.round()).abs() > 1e-6 * v.max(1.0) {
        return Err(format!("count '{text}' is not an integer"));
    }
    Ok(v.round() as u64)
}

/// Shortest-round-trip float formatting for table cells.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("5e8").unwrap(), 500_000_000);
        assert_eq!(parse_count("1000000").unwrap(), 1_000_000);
        assert_eq!(parse_count("2.5e3").unwrap(), 2500);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("abc").is_err());
        assert!(parse_count("-5").is_err());
    }

    #[test]
    fn suffix_replaces_extension() {
        assert_eq!(
            with_suffix(Path::new("/tmp/run.csv"), "summary.json"),
            PathBuf::from("/tmp/run.summary.json")
        );
    }
}
