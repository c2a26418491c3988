//! File formats and atomic output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sobgeo::field::{ScalarField, TangentField};
use sobgeo::grid::PeriodicGrid;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// `{schema_version, n, d, points}`, one row of `d` reals per node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub schema_version: u32,
    pub n: usize,
    pub d: usize,
    pub points: Vec<Vec<f64>>,
    /// Resolved config of the run that wrote the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

impl SampleFile {
    pub fn from_field(field: &TangentField, config: Option<Value>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: field.n(),
            d: field.d(),
            points: field.to_rows(),
            config,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: SampleFile =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        file.check()
            .map_err(|msg| CliError::Validation(format!("{}: {msg}", path.display())))?;
        Ok(file)
    }

    fn check(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {}", self.schema_version));
        }
        PeriodicGrid::new(self.n).map_err(|e| e.to_string())?;
        if self.d == 0 {
            return Err("d must be positive".into());
        }
        if self.points.len() != self.n {
            return Err(format!("expected {} rows, found {}", self.n, self.points.len()));
        }
        for (j, row) in self.points.iter().enumerate() {
            if row.len() != self.d {
                return Err(format!("row {j} has {} entries, expected {}", row.len(), self.d));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(format!("row {j} has a non-finite entry"));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> TangentField {
        TangentField::from_rows(&self.points).expect("rows checked on read")
    }

    /// First column as a scalar field; the file must have `d = 1`.
    pub fn scalar(&self) -> CliResult<ScalarField> {
        if self.d != 1 {
            return Err(CliError::Validation(format!(
                "expected a scalar field (d = 1), found d = {}",
                self.d
            )));
        }
        Ok(self.field().component(0))
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// JSON-lines: a header line carrying the config, then one record per line.
pub fn write_jsonl(path: &Path, config: &Value, records: impl IntoIterator<Item = Value>) -> CliResult<()> {
    let mut text = String::new();
    let header = json!({ "header": { "schema_version": SCHEMA_VERSION, "config": config } });
    text.push_str(&header.to_string());
    text.push('\n');
    for r in records {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// CSV with a `#`-comment line carrying the config.
pub fn write_csv(path: &Path, config: &Value, columns: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut text = format!("# config {config}\n{}\n", columns.join(","));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let field = TangentField::from_fn(9, 2, |j, c| (j + c) as f64);
        write_json(&path, &SampleFile::from_field(&field, None)).unwrap();
        assert_eq!(SampleFile::read(&path).unwrap().field(), field);

        std::fs::write(&path, r#"{"schema_version":1,"n":9,"d":2,"points":[[1,2]]}"#).unwrap();
        assert!(matches!(SampleFile::read(&path), Err(CliError::Validation(_))));
        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(SampleFile::read(&path), Err(CliError::Validation(_))));
        assert!(matches!(
            SampleFile::read(&dir.path().join("missing.json")),
            Err(CliError::Io { .. })
        ));
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a.txt"), b"x").unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.txt")]);
    }
}
