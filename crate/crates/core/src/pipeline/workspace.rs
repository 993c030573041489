//! On-disk layout of one presentation:
//!
//! ```text
//! work/<ID>/manifest.json      inputs (plus the files it names)
//! work/<ID>/slides/            rasterized slides
//! work/<ID>/artifacts/         stage artifacts 00..10
//! work/<ID>/staging/           bundle under construction
//! work/<ID>/out/               committed bundle, present only after COMPLETE
//! work/<ID>/run.json           result of the last run
//! work/<ID>/media_cache.json   uploaded media handles
//! ```

use std::fs::{self, File, TryLockError};
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::curator::OVERRIDES_FILE;
use crate::intake::MANIFEST_FILE;

pub const CONFIG_FILE: &str = "config.toml";
pub const MOCK_RESPONSES_FILE: &str = "mock_responses.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
    presentation_id: String,
}

#[derive(Debug, Error)]
pub enum LockError {
    #[error("another pipeline is running for {0}")]
    Busy(String),
    #[error("cannot create lock file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Held for the duration of a run; released on drop.
#[derive(Debug)]
pub struct RunLock {
    _file: File,
}

impl Workspace {
    pub fn new(work_root: &Path, presentation_id: &str) -> Self {
        Workspace {
            root: work_root.join(presentation_id),
            presentation_id: presentation_id.to_string(),
        }
    }

    pub fn presentation_id(&self) -> &str {
        &self.presentation_id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn overrides(&self) -> PathBuf {
        self.root.join(OVERRIDES_FILE)
    }

    pub fn mock_responses(&self) -> PathBuf {
        self.root.join(MOCK_RESPONSES_FILE)
    }

    pub fn artifacts(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    pub fn artifact(&self, file: &str) -> PathBuf {
        self.artifacts().join(file)
    }

    pub fn staging(&self) -> PathBuf {
        self.root.join("staging")
    }

    pub fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    pub fn run_record(&self) -> PathBuf {
        self.root.join("run.json")
    }

    pub fn media_cache(&self) -> PathBuf {
        self.root.join("media_cache.json")
    }

    fn lock_path(&self) -> PathBuf {
        self.root.join(".lock")
    }

    /// Take the per-presentation lock without waiting.
    pub fn lock(&self) -> Result<RunLock, LockError> {
        let path = self.lock_path();
        let io_err = |source| LockError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&self.root).map_err(io_err)?;
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err)?;
        match file.try_lock() {
            Ok(()) => Ok(RunLock { _file: file }),
            Err(TryLockError::WouldBlock) => Err(LockError::Busy(self.presentation_id.clone())),
            Err(TryLockError::Error(source)) => Err(io_err(source)),
        }
    }
}

pub fn remove_dir_if_exists(path: &Path) -> io::Result<()> {
    match fs::remove_dir_all(path) {
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
        other => other,
    }
}

/// Copy every regular file under `from` into `to`, recreating subdirectories.
pub fn copy_tree(from: &Path, to: &Path) -> io::Result<()> {
    fs::create_dir_all(to)?;
    let mut entries: Vec<_> = fs::read_dir(from)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}
