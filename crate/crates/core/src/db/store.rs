use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;

use super::names::{build_name_table, validate_name};
use super::{io_err, write_atomic, DbError};
use crate::haar::CascadeModel;
use crate::image::{encode_pgm, read_pgm, GrayImage};
use crate::lbph::{calibrate_threshold, train, LbpParams, RecognizerModel, DEFAULT_QUANTILE};
use crate::prep::{prepare_enrollment, PrepParams};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct StoreEntry {
    pub name: String,
    pub index: u32,
    pub path: PathBuf,
}

/// A flat directory of `<name>_<index>.pgm` chips.
#[derive(Clone, Debug)]
pub struct EnrollmentStore {
    root: PathBuf,
}

fn parse_entry_name(file: &str) -> Option<(String, u32)> {
    let stem = file.strip_suffix(".pgm")?;
    let (name, index) = stem.split_once('_')?;
    validate_name(name).ok()?;
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((name.to_string(), index.parse().ok()?))
}

impl EnrollmentStore {
    /// Opens an existing directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DbError> {
        let root = root.into();
        std::fs::read_dir(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    /// Opens the directory, creating it first if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, DbError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Chips sorted by `(name, index)`; files that do not follow the naming
    /// convention are ignored.
    pub fn entries(&self) -> Result<Vec<StoreEntry>, DbError> {
        let mut out = Vec::new();
        for item in std::fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let item = item.map_err(io_err(&self.root))?;
            let file = item.file_name();
            let Some(file) = file.to_str() else { continue };
            if file.starts_with('.') {
                continue;
            }
            match parse_entry_name(file) {
                Some((name, index)) => out.push(StoreEntry {
                    name,
                    index,
                    path: item.path(),
                }),
                None => warn!("ignoring {file:?} in enrollment store"),
            }
        }
        out.sort();
        Ok(out)
    }

    fn next_index(&self, name: &str) -> Result<u32, DbError> {
        Ok(self
            .entries()?
            .iter()
            .filter(|e| e.name == name)
            .map(|e| e.index + 1)
            .max()
            .unwrap_or(0))
    }

    /// Stores an already prepared chip under the next free index.
    pub fn add_chip(&self, name: &str, chip: &GrayImage) -> Result<PathBuf, DbError> {
        validate_name(name)?;
        let path = self
            .root
            .join(format!("{name}_{}.pgm", self.next_index(name)?));
        write_atomic(&path, &encode_pgm(chip))?;
        Ok(path)
    }
}

/// Detects, aligns, filters and crops a face, then stores the chip.
pub fn enroll(
    img: &GrayImage,
    name: &str,
    store: &EnrollmentStore,
    face_model: &CascadeModel,
    eye_model: &CascadeModel,
    prep: &PrepParams,
) -> Result<PathBuf, DbError> {
    validate_name(name)?;
    let chip = prepare_enrollment(img, face_model, eye_model, prep)?;
    store.add_chip(name, &chip.image)
}

/// Trains on every chip in the store. The threshold is calibrated only when
/// each subject has at least two chips.
pub fn train_store(store: &EnrollmentStore, p: &LbpParams) -> Result<RecognizerModel, DbError> {
    let entries = store.entries()?;
    if entries.is_empty() {
        return Err(DbError::EmptyStore);
    }
    let table = build_name_table(entries.iter().map(|e| e.name.as_str()))?;
    let mut chips = Vec::with_capacity(entries.len());
    for e in &entries {
        let id = table
            .id_of(&e.name)
            .expect("table built from these entries");
        chips.push((id, read_pgm(&e.path)?));
    }
    let names: BTreeMap<u32, String> = table.entries().map(|(id, n)| (id, n.to_string())).collect();
    let mut model = train(&chips, p, &names)?;
    let mut per_subject: BTreeMap<u32, usize> = BTreeMap::new();
    for (id, _) in &chips {
        *per_subject.entry(*id).or_default() += 1;
    }
    if per_subject.values().all(|&c| c >= 2) {
        calibrate_threshold(&mut model, DEFAULT_QUANTILE)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_names() {
        assert_eq!(parse_entry_name("alice_0.pgm"), Some(("alice".into(), 0)));
        assert_eq!(parse_entry_name("alice_12.pgm"), Some(("alice".into(), 12)));
        assert_eq!(parse_entry_name("alice_1_old.pgm"), None);
        assert_eq!(parse_entry_name("alice_.pgm"), None);
        assert_eq!(parse_entry_name("alice_1.png"), None);
        assert_eq!(parse_entry_name("_1.pgm"), None);
    }
}
