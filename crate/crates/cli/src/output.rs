use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqcat_core::dynamics::EvolveOptions;

use crate::config::ExperimentConfig;
use crate::experiments::Table;
use crate::validate::Violation;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let o = EvolveOptions::default();
        Self { rtol: o.rtol, atol: o.atol }
    }
}

/// Everything needed to reproduce a result file.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub git_revision: &'static str,
    pub kind: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub tolerances: Tolerances,
    pub wall_time_s: f64,
    pub warnings: Vec<Violation>,
    pub skipped: Vec<String>,
    pub summary: serde_json::Value,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub metadata: Metadata,
    pub table: Table,
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    metadata: &'a Metadata,
    columns: &'a [&'static str],
    rows: &'a [Vec<f64>],
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn write_csv<W: Write>(table: &Table, w: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    wtr.write_record(&table.columns).map_err(csv_err)?;
    for row in &table.rows {
        // Debug of f64 is the shortest string that parses back to the same bits
        wtr.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::Io(e.to_string()))
}

impl Artifact {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(JsonDocument { metadata: &self.metadata, columns: &self.table.columns, rows: &self.table.rows })
            .expect("artifact serializes")
    }

    /// JSON for `.json` paths; otherwise CSV plus a metadata sidecar. `None` prints CSV to stdout.
    pub fn write(&self, path: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
        let Some(path) = path else {
            write_csv(&self.table, std::io::stdout().lock())?;
            return Ok(Vec::new());
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
        }
        if is_json(path) {
            let text = serde_json::to_string_pretty(&self.to_json()).expect("artifact serializes");
            std::fs::write(path, text + "\n").map_err(io(path))?;
            return Ok(vec![path.to_path_buf()]);
        }
        write_csv(&self.table, std::fs::File::create(path).map_err(io(path))?)?;
        let meta = sidecar_path(path);
        let text = serde_json::to_string_pretty(&serde_json::json!({ "metadata": &self.metadata })).expect("metadata serializes");
        std::fs::write(&meta, text + "\n").map_err(io(&meta))?;
        Ok(vec![path.to_path_buf(), meta])
    }
}
