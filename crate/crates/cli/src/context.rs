//! Per-command bookkeeping: declared inputs, written outputs, the manifest,
//! and removal of partial outputs when the command fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lppgate_core::io::{write_bytes, write_json};
use lppgate_core::manifest::{GiveUp, RunManifest};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct RunContext {
    manifest: RunManifest,
    inputs: Vec<PathBuf>,
    written: Vec<PathBuf>,
    started: Instant,
}

impl RunContext {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Self {
        Self {
            manifest: RunManifest::new(command, config, seed),
            inputs: Vec::new(),
            written: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Registers a declared input, failing if it is absent.
    pub fn input(&mut self, path: &Path) -> CliResult<PathBuf> {
        if !path.is_file() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        self.manifest.add_input(path)?;
        self.inputs.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        self.written.push(path.to_path_buf());
        write_bytes(path, bytes)?;
        self.manifest.add_output(path)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        self.written.push(path.to_path_buf());
        write_json(path, value)?;
        self.manifest.add_output(path)?;
        Ok(())
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        tracing::warn!("{m}");
        self.manifest.warnings.push(m);
    }

    pub fn give_ups(&mut self, g: Vec<GiveUp>) {
        self.manifest.give_ups = g;
    }

    pub fn finish(mut self, manifest_path: &Path) -> CliResult<()> {
        self.manifest.elapsed_ms = self.started.elapsed().as_millis() as u64;
        self.written.push(manifest_path.to_path_buf());
        let res = write_json(manifest_path, &self.manifest).map_err(CliError::from);
        if res.is_err() {
            self.cleanup();
        }
        res
    }

    /// Deletes everything this command wrote, except files that were also inputs.
    pub fn cleanup(&self) {
        for p in &self.written {
            if !self.inputs.contains(p) {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// `dir/file.ext` → `dir/file.manifest.json`.
pub fn manifest_for(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}
