//! Output-directory handling and run manifests. Every subcommand funnels its
//! files through an [`ArtifactSet`] so the closing manifest always lists what
//! was read and written, with content hashes.

use std::fs;
use std::path::{Path, PathBuf};

use cat_bench::io::{canonical_json, digest_file, RunManifest, OUT_DIR_ENV};

use crate::CliError;

/// Resolves the output directory (flag, environment, `./out`) and creates it.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::data(format!("{}: cannot create directory: {e}", dir.display())))?;
    Ok(dir)
}

/// Files produced by one command invocation, plus the inputs they came from.
pub struct ArtifactSet {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl ArtifactSet {
    pub fn new(dir: PathBuf) -> ArtifactSet {
        ArtifactSet {
            dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input file so its hash lands in the manifest.
    pub fn read_from(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes one output file under the artifact directory.
    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Serializes a document with sorted keys and writes it.
    pub fn write_json<T: serde::Serialize>(
        &mut self,
        name: &str,
        value: &T,
    ) -> Result<PathBuf, CliError> {
        let mut doc = canonical_json(value);
        doc.push('\n');
        self.write_text(name, &doc)
    }

    /// Hashes all recorded files and writes `manifest.json` last.
    pub fn finish(
        self,
        command: &str,
        seeds: Vec<u64>,
        parameters: serde_json::Value,
    ) -> Result<(), CliError> {
        let mut manifest = RunManifest::new(command, seeds, parameters);
        for path in &self.inputs {
            manifest.inputs.push(
                digest_file(path)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
            );
        }
        for path in &self.outputs {
            manifest.outputs.push(
                digest_file(path)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
            );
        }
        let mut doc = canonical_json(&manifest);
        doc.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, doc).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}
