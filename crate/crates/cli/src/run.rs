//! Output collection for one command invocation.
//!
//! Commands compute everything first and only then [`Run::commit`] their
//! files, so a failing command leaves no partial output behind.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use crate::io::{to_json_pretty, write_atomic};
use crate::manifest::{manifest_path, RunManifest};

pub struct Run {
    manifest: RunManifest,
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: String,
    stderr: String,
}

/// Text a finished command wants printed.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Printed {
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Run {
            manifest: RunManifest::new(command, config, seed)?,
            files: Vec::new(),
            stdout: String::new(),
            stderr: String::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.add_input(path)
    }

    pub fn output(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    pub fn say(&mut self, text: impl AsRef<str>) {
        self.stdout.push_str(text.as_ref());
        if !self.stdout.ends_with('\n') {
            self.stdout.push('\n');
        }
    }

    pub fn warn(&mut self, text: impl AsRef<str>) {
        self.stderr.push_str(text.as_ref());
        if !self.stderr.ends_with('\n') {
            self.stderr.push('\n');
        }
    }

    pub fn commit(self) -> Result<Printed> {
        if !self.files.is_empty() {
            let manifest = to_json_pretty(&self.manifest)?;
            for (path, bytes) in &self.files {
                write_atomic(path, bytes)?;
                write_atomic(&manifest_path(path), &manifest)?;
            }
        }
        Ok(Printed {
            stdout: self.stdout,
            stderr: self.stderr,
        })
    }
}
