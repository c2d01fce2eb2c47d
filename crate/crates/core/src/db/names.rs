use std::collections::BTreeSet;
use std::path::Path;

use super::{io_err, write_atomic, DbError};

/// Subject from an enrollment file name: everything before the first `_`.
pub fn parse_subject_name(filename: &str) -> Result<String, DbError> {
    let stem = match filename.rfind('.') {
        Some(dot) => &filename[..dot],
        None => filename,
    };
    match stem.find('_') {
        Some(i) => Ok(stem[..i].to_string()),
        None => Err(DbError::NoUnderscore(filename.to_string())),
    }
}

/// Names must be nonempty and free of `_`, path separators and whitespace
/// (the model file separates fields with spaces).
pub fn validate_name(name: &str) -> Result<(), DbError> {
    let bad = |c: char| c == '_' || c == '/' || c == '\\' || c.is_whitespace() || c.is_control();
    if name.is_empty() || name.chars().any(bad) || name == "." || name == ".." {
        return Err(DbError::IllegalName(name.to_string()));
    }
    Ok(())
}

/// Subject names sorted by byte order; a name's id is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NameTable {
    names: Vec<String>,
}

impl NameTable {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| i as u32)
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    /// `(id, name)` pairs in id order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u32, n.as_str()))
    }
}

pub fn build_name_table<I, S>(names: I) -> Result<NameTable, DbError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut set = BTreeSet::new();
    for n in names {
        let n = n.as_ref();
        validate_name(n)?;
        set.insert(n.to_string());
    }
    if set.is_empty() {
        return Err(DbError::EmptyNameSet);
    }
    // String's Ord is byte order
    Ok(NameTable {
        names: set.into_iter().collect(),
    })
}

pub(crate) fn format_namelist(t: &NameTable) -> String {
    t.entries().map(|(id, n)| format!("{id}\t{n}\n")).collect()
}

pub fn save_namelist(t: &NameTable, path: &Path) -> Result<(), DbError> {
    write_atomic(path, format_namelist(t).as_bytes())
}

pub(crate) fn parse_namelist(text: &str) -> Result<NameTable, DbError> {
    let mut names = Vec::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let malformed = || DbError::MalformedLine {
            line: i + 1,
            content: line.to_string(),
        };
        let (id, name) = line.split_once('\t').ok_or_else(malformed)?;
        let id: usize = id.parse().map_err(|_| malformed())?;
        validate_name(name).map_err(|_| malformed())?;
        if id != i {
            return Err(DbError::InvariantViolation(format!(
                "line {} has id {id}, expected {i}",
                i + 1
            )));
        }
        if names
            .last()
            .is_some_and(|prev: &String| prev.as_str() >= name)
        {
            return Err(DbError::InvariantViolation(format!(
                "{name:?} is out of order or duplicated"
            )));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(DbError::EmptyNameSet);
    }
    Ok(NameTable { names })
}

pub fn load_namelist(path: &Path) -> Result<NameTable, DbError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_namelist(&text)
}
