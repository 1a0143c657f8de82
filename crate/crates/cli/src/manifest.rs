//! Run manifests: what was run, on which files, producing which outputs.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::io::{write_atomic, InputError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub format_version: u32,
    /// The parsed invocation with absolute paths; replaying it reproduces
    /// the outputs.
    pub invocation: Command,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| InputError(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)
            .map_err(|e| InputError(format!("cannot parse manifest {}: {e}", path.display())))?)
    }
}
