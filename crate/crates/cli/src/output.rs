//! Output directories with all-or-nothing file writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Named file contents, produced in full before anything touches the disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn append(&mut self, other: Artifacts) {
        self.files.extend(other.files);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// The directory must already exist; it is never created.
    pub fn open(path: &Path) -> Result<Self> {
        let bad = |reason: &str| CliError::Output {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        match std::fs::metadata(path) {
            Ok(m) if m.is_dir() => Ok(OutputDir {
                root: path.to_path_buf(),
            }),
            Ok(_) => Err(bad("not a directory")),
            Err(_) => Err(bad("does not exist")),
        }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Stages every file as a temporary in the directory, then renames them
    /// into place. A failure while staging leaves no new files behind.
    pub fn commit(&self, artifacts: &Artifacts) -> Result<Vec<PathBuf>> {
        let mut staged = Vec::with_capacity(artifacts.len());
        for (name, bytes) in &artifacts.files {
            if name.contains(['/', '\\']) {
                return Err(CliError::Output {
                    path: self.root.clone(),
                    reason: format!("file name {name:?} has a path separator"),
                });
            }
            let mut tmp = tempfile::Builder::new()
                .prefix(".classunc-")
                .tempfile_in(&self.root)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, self.root.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, dest) in staged {
            tmp.persist(&dest).map_err(|e| e.error)?;
            written.push(dest);
        }
        Ok(written)
    }
}
