//! On-disk feature cache layout.

use std::path::{Path, PathBuf};

use asc_rfl::data::{parse_manifest, ManifestEntry};
use asc_rfl::dsp::StftConfig;
use asc_rfl::Matrix;
use serde::{Deserialize, Serialize};

use crate::{read_json, usage, write_json, Result};

pub const CACHE_FILE: &str = "cache.json";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const FEATURE_DIR: &str = "features";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheKind {
    /// Log-mel features, frames × mel.
    LogMel,
    /// Power spectrograms, frames × (n_fft/2 + 1).
    Power,
    /// Decomposed log-mel components, one file per role suffix.
    Components,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheInfo {
    pub kind: CacheKind,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub n_mels: usize,
    pub lsmn: bool,
    /// Role suffixes of a component cache, longest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
}

impl CacheInfo {
    /// Suffixes of the streams stored per clip (`""` for an undecomposed cache).
    pub fn streams(&self) -> Vec<String> {
        match self.kind {
            CacheKind::Components => self.components.clone(),
            _ => vec![String::new()],
        }
    }
}

/// A cache directory and its descriptor.
#[derive(Debug, Clone)]
pub struct Cache {
    pub dir: PathBuf,
    pub info: CacheInfo,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(CACHE_FILE);
        if !path.exists() {
            return Err(usage(format!("{} is not a feature cache (no {CACHE_FILE})", dir.display())));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            info: read_json(&path)?,
        })
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>> {
        Ok(parse_manifest(self.dir.join(MANIFEST_FILE))?)
    }

    pub fn stream_path(&self, clip_id: &str, suffix: &str) -> PathBuf {
        stream_path(&self.dir, clip_id, suffix)
    }

    pub fn read(&self, clip_id: &str, suffix: &str) -> Result<Matrix> {
        Ok(asc_rfl::data::cache_read(self.stream_path(clip_id, suffix))?)
    }
}

pub fn stream_path(dir: &Path, clip_id: &str, suffix: &str) -> PathBuf {
    let name = if suffix.is_empty() {
        format!("{clip_id}.tff")
    } else {
        format!("{clip_id}_{suffix}.tff")
    };
    dir.join(FEATURE_DIR).join(name)
}

pub fn stats_path(dir: &Path, suffix: &str) -> PathBuf {
    if suffix.is_empty() {
        dir.join("bin_stats.bst")
    } else {
        dir.join(format!("bin_stats_{suffix}.bst"))
    }
}

pub(crate) fn write_info(dir: &Path, info: &CacheInfo) -> Result<PathBuf> {
    let path = dir.join(CACHE_FILE);
    write_json(&path, info)?;
    Ok(path)
}

pub(crate) fn write_manifest_file(dir: &Path, entries: &[ManifestEntry]) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut buf = Vec::new();
    asc_rfl::data::write_manifest(entries, &mut buf).map_err(crate::io_err(&path))?;
    crate::write_file(&path, buf)?;
    Ok(path)
}

/// Writes `failures.txt` and returns the error to report, if any clip failed.
pub(crate) fn report_failures(dir: &Path, failures: &[(String, String)], total: usize) -> Result<()> {
    let path = dir.join("failures.txt");
    if failures.is_empty() {
        if path.exists() {
            std::fs::remove_file(&path).map_err(crate::io_err(&path))?;
        }
        return Ok(());
    }
    let mut text = String::new();
    for (clip, reason) in failures {
        text.push_str(&format!("{clip}\t{reason}\n"));
    }
    crate::write_file(&path, text)?;
    Err(crate::CliError::ClipFailures {
        failed: failures.len(),
        total,
        report: path,
    })
}
