//! CSV and JSONL text, and the artifact set a command writes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use score_core::trainer::TrajectoryRecord;

use crate::config::{ExperimentConfig, Format};
use crate::error::LabError;

/// A CSV document built row by row. Numbers use the shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self {
            text: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, label: Option<&str>, values: &[f64]) {
        let mut first = true;
        if let Some(l) = label {
            self.text.push_str(l);
            first = false;
        }
        for v in values {
            if !first {
                self.text.push(',');
            }
            first = false;
            let _ = write!(self.text, "{v}");
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut csv = Csv::new(TrajectoryRecord::CSV_HEADER);
    for r in records {
        let step = r.step.to_string();
        csv.row(Some(&step), &r.csv_fields());
    }
    csv.into_string()
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    out
}

/// The config as embedded in SVG comments. The output directory is left out
/// so equal runs written to different places stay byte-identical.
pub fn config_comment(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.outputs.dir = None;
    serde_json::to_string_pretty(&c).expect("config serializes")
}

/// Named outputs of one command, written together at the end.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Format, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, format: Format, body: String) {
        self.files.push((name.into(), format, body));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.0 == name)
            .map(|f| f.2.as_str())
    }

    /// Write the files whose format is enabled; returns their paths.
    pub fn write(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, LabError> {
        std::fs::create_dir_all(dir).map_err(|source| LabError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        for (name, format, body) in &self.files {
            if !formats.contains(format) {
                continue;
            }
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| LabError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}
