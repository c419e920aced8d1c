use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments::Plan;

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.txt";

/// Formats a float for data files; fixed width keeps artifacts diffable.
pub fn num(v: f64) -> String {
    format!("{v:.11e}")
}

/// Files of one run, held in memory until the run has fully succeeded.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
    summary: Vec<String>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I)
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.into_iter().collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.files.insert(name.to_string(), text.into_bytes());
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Numerical(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.files.insert(name.to_string(), bytes);
        Ok(())
    }

    /// Appends a line to the human-readable summary.
    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn summary_lines(&self) -> &[String] {
        &self.summary
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn file_names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    /// Adds `summary.txt` and a manifest echoing the config and listing every file.
    ///
    /// `output_dir` and `threads` are left out so the manifest is identical
    /// wherever and however the run executes.
    pub fn add_manifest(&mut self, config: &ExperimentConfig, plan: &Plan) -> Result<(), CliError> {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "mpcorr {} {}",
            env!("CARGO_PKG_VERSION"),
            plan.experiment().name()
        );
        let _ = writeln!(text, "seed {}", config.seed);
        for line in &self.summary {
            let _ = writeln!(text, "{line}");
        }
        self.files.insert(SUMMARY.to_string(), text.into_bytes());

        let mut files: Vec<&str> = self.file_names().collect();
        files.push(MANIFEST);
        files.sort_unstable();
        let manifest = json!({
            "tool": "mpcorr",
            "version": env!("CARGO_PKG_VERSION"),
            "config": {
                "schema_version": config.schema_version,
                "experiment": config.experiment,
                "parameters": config.parameters,
                "seed": config.seed,
            },
            "resolved_parameters": plan.resolved_parameters()?,
            "files": files,
        });
        self.json(MANIFEST, &manifest)
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}
