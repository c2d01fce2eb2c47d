//! Enrollment store, subject names, model files and the retraining watcher.

mod modelfile;
mod names;
mod store;
mod watch;

pub use modelfile::{load_model, parse_model, save_model, serialize_model};
pub use names::{
    build_name_table, load_namelist, parse_subject_name, save_namelist, validate_name, NameTable,
};
pub use store::{enroll, train_store, EnrollmentStore, StoreEntry};
pub use watch::{PollReport, Watcher, WatcherConfig};

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::ImageError;
use crate::lbph::LbphError;
use crate::prep::PrepError;

/// File name of the id/name listing written next to the model.
pub const NAMELIST_FILE: &str = "NameList.txt";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("file name {0:?} has no '_' before the extension")]
    NoUnderscore(String),
    #[error("name set is empty")]
    EmptyNameSet,
    #[error("illegal subject name {0:?}")]
    IllegalName(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed entry {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("name table invariant violated: {0}")]
    InvariantViolation(String),
    #[error("not an LBPHDB file: {0:?}")]
    BadHeader(String),
    #[error("unsupported LBPHDB version {0:?}")]
    VersionUnsupported(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("enrollment store has no chips")]
    EmptyStore,
    #[error("no face found")]
    NoFaceFound,
    #[error(transparent)]
    Prep(PrepError),
    #[error(transparent)]
    Lbph(#[from] LbphError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl From<PrepError> for DbError {
    fn from(e: PrepError) -> Self {
        match e {
            PrepError::NoFaceFound => DbError::NoFaceFound,
            other => DbError::Prep(other),
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DbError + '_ {
    move |source| DbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Replaces `path` with `bytes` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DbError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".facerec-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| DbError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}
