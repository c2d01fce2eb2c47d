use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, SystemTime};

use log::{info, warn};

use super::names::{build_name_table, parse_subject_name, save_namelist};
use super::store::{enroll, train_store, EnrollmentStore};
use super::{io_err, save_model, DbError, NAMELIST_FILE};
use crate::haar::CascadeModel;
use crate::image::read_pgm;
use crate::lbph::LbpParams;
use crate::prep::PrepParams;

pub struct WatcherConfig {
    pub incoming: PathBuf,
    pub model_path: PathBuf,
    pub poll_interval: Duration,
    pub prep: PrepParams,
    pub lbp: LbpParams,
}

/// What one poll did.
#[derive(Debug, Default)]
pub struct PollReport {
    /// Incoming files enrolled, with the chip each produced.
    pub enrolled: Vec<(PathBuf, PathBuf)>,
    pub failed: Vec<(PathBuf, String)>,
    pub retrained: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Stamp {
    len: u64,
    modified: Option<SystemTime>,
}

/// Single-writer loop that enrolls dropped images and retrains once per
/// batch.
///
/// A file is processed once its size is unchanged between two polls.
/// Enrolled files are deleted; failed ones stay put and are not retried
/// until they change.
pub struct Watcher {
    cfg: WatcherConfig,
    store: EnrollmentStore,
    face_model: CascadeModel,
    eye_model: CascadeModel,
    seen: HashMap<PathBuf, Stamp>,
    failed: HashMap<PathBuf, Stamp>,
}

fn stamp(path: &Path) -> Option<Stamp> {
    let meta = std::fs::metadata(path).ok()?;
    meta.is_file().then(|| Stamp {
        len: meta.len(),
        modified: meta.modified().ok(),
    })
}

impl Watcher {
    /// Fails when either directory cannot be read.
    pub fn new(
        cfg: WatcherConfig,
        store: EnrollmentStore,
        face_model: CascadeModel,
        eye_model: CascadeModel,
    ) -> Result<Self, DbError> {
        std::fs::read_dir(&cfg.incoming).map_err(io_err(&cfg.incoming))?;
        store.entries()?;
        Ok(Self {
            cfg,
            store,
            face_model,
            eye_model,
            seen: HashMap::new(),
            failed: HashMap::new(),
        })
    }

    pub fn store(&self) -> &EnrollmentStore {
        &self.store
    }

    fn candidates(&self) -> Result<Vec<PathBuf>, DbError> {
        let dir = &self.cfg.incoming;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok())
            .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
            .map(|e| e.path())
            .collect();
        files.sort();
        Ok(files)
    }

    fn ingest(&self, path: &Path) -> Result<PathBuf, DbError> {
        let file = path
            .file_name()
            .and_then(|f| f.to_str())
            .ok_or_else(|| DbError::IllegalName(path.display().to_string()))?;
        let name = parse_subject_name(file)?;
        let img = read_pgm(path)?;
        let chip = enroll(
            &img,
            &name,
            &self.store,
            &self.face_model,
            &self.eye_model,
            &self.cfg.prep,
        )?;
        std::fs::remove_file(path).map_err(io_err(path))?;
        Ok(chip)
    }

    /// Retrains from the whole store and replaces the model and name list.
    pub fn retrain(&self) -> Result<(), DbError> {
        let model = train_store(&self.store, &self.cfg.lbp)?;
        let table = build_name_table(model.names.values())?;
        save_model(&model, &self.cfg.model_path)?;
        let namelist = self
            .cfg
            .model_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(NAMELIST_FILE);
        save_namelist(&table, &namelist)
    }

    /// One scan of the incoming directory. Only directory listing and
    /// retraining errors are returned; per-file problems land in the report.
    pub fn poll_once(&mut self) -> Result<PollReport, DbError> {
        let mut report = PollReport::default();
        let files = self.candidates()?;
        self.seen.retain(|p, _| files.contains(p));
        self.failed.retain(|p, _| files.contains(p));
        for path in files {
            let Some(now) = stamp(&path) else { continue };
            if self.failed.get(&path) == Some(&now) {
                continue;
            }
            self.failed.remove(&path);
            if self.seen.insert(path.clone(), now) != Some(now) {
                // new or still growing; look again next poll
                continue;
            }
            match self.ingest(&path) {
                Ok(chip) => {
                    info!("enrolled {} as {}", path.display(), chip.display());
                    self.seen.remove(&path);
                    report.enrolled.push((path, chip));
                }
                Err(e) => {
                    warn!("skipping {}: {e}", path.display());
                    self.failed.insert(path.clone(), now);
                    report.failed.push((path, e.to_string()));
                }
            }
        }
        if !report.enrolled.is_empty() {
            self.retrain()?;
            info!("model written to {}", self.cfg.model_path.display());
            report.retrained = true;
        }
        Ok(report)
    }

    /// Polls until `stop` is set. Retraining failures are logged, not fatal.
    pub fn run(&mut self, stop: &AtomicBool) -> Result<(), DbError> {
        while !stop.load(Ordering::Relaxed) {
            match self.poll_once() {
                Ok(_) => {}
                Err(e @ DbError::Io { .. }) if !self.cfg.incoming.is_dir() => return Err(e),
                Err(e) => warn!("poll failed: {e}"),
            }
            std::thread::sleep(self.cfg.poll_interval);
        }
        Ok(())
    }
}
