//! Subcommand implementations behind the `asc-rfl` binary.
//!
//! Each command reads and writes plain directories: feature caches hold a
//! `cache.json` descriptor, a `manifest.tsv` with the split column, one
//! `TFF1` file per clip and component under `features/`, and an
//! `outputs.txt` listing everything written.

use std::path::{Path, PathBuf};

pub mod cache;
pub mod config;
mod decompose;
mod features;
mod run;
mod synth;

pub use cache::{CacheInfo, CacheKind};
pub use config::{Paths, RunConfig};
pub use decompose::{decompose, DecomposeArgs, Method};
pub use features::{features, FeaturesArgs};
pub use run::{eval, train, EvalArgs, EvalReport, RunInfo, TrainArgs};
pub use synth::{losscurves, synth, SynthArgs, LOSS_CURVES};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] asc_rfl::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("{failed} of {total} clips failed; see {report}")]
    ClipFailures {
        failed: usize,
        total: usize,
        report: PathBuf,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    write_file(path, text + "\n")
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes `outputs.txt` (one path per line, relative to `dir`).
pub(crate) fn write_outputs(dir: &Path, outputs: &[PathBuf]) -> Result<()> {
    let mut text = String::new();
    for p in outputs {
        let rel = p.strip_prefix(dir).unwrap_or(p);
        text.push_str(&rel.to_string_lossy());
        text.push('\n');
    }
    write_file(&dir.join("outputs.txt"), text)
}

/// Runs `work` on every index in `0..n` with up to `jobs` threads and
/// returns the results in index order.
pub(crate) fn parallel_map<T: Send>(
    n: usize,
    jobs: usize,
    work: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = work(i);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every index is processed"))
        .collect()
}
