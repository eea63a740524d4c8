use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use crate::output::{list_files, sha256_file};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every artifact set. It holds no
/// timestamps or absolute output paths, so identical runs produce
/// identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Manifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records `path` as given on the command line or in the config.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.add_input_as(path, path)
    }

    /// Records `label` but hashes `actual`, so config-relative paths stay
    /// stable when the config directory moves.
    pub fn add_input_as(&mut self, label: &Path, actual: &Path) -> Result<()> {
        self.inputs.push(FileHash {
            path: label.to_string_lossy().into_owned(),
            sha256: sha256_file(actual)?,
        });
        Ok(())
    }

    /// Serialises the manifest for single-file outputs, hashed by the caller.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Hashes every file under `dir` and writes the manifest there.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.outputs = list_files(dir)?
            .into_iter()
            .filter(|p| p != MANIFEST_NAME)
            .map(|p| {
                let sha256 = sha256_file(&dir.join(&p))?;
                Ok(FileHash { path: p, sha256 })
            })
            .collect::<Result<_>>()?;
        std::fs::write(dir.join(MANIFEST_NAME), self.to_json()?)?;
        Ok(())
    }
}
