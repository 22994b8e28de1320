//! Sidecar metadata written next to every output file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// Some grid points or part of a trajectory failed.
    Partial,
    Failed,
}

impl Status {
    pub fn from_counts(total: usize, failed: usize) -> Status {
        if failed == 0 && total > 0 {
            Status::Ok
        } else if failed < total {
            Status::Partial
        } else {
            Status::Failed
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Partial => "partial",
            Status::Failed => "failed",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Partial => 2,
            Status::Failed => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub command: String,
    pub output: PathBuf,
    pub seed: u64,
    /// RFC 3339 start time.
    pub started: String,
    pub duration_s: f64,
    pub status: Status,
    pub points_total: usize,
    pub points_failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest: Header,
    pub config: RunConfig,
    /// Command-specific summary values.
    #[serde(default)]
    pub summary: toml::Table,
}

/// `<output>.manifest`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing manifest")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
