use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::CliError;

/// Collects a command's outputs in a hidden sibling directory and moves them
/// into place only on success; dropping an uncommitted stage deletes it.
pub(crate) struct Staging {
    dir: TempDir,
    target: PathBuf,
    names: Vec<String>,
}

impl Staging {
    pub(crate) fn new(target: &Path) -> Result<Self, CliError> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
        let dir = tempfile::Builder::new()
            .prefix(".topoexplain-stage-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(format!("staging in {}", parent.display()), e))?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
            names: Vec::new(),
        })
    }

    /// Staged location for output `name`.
    pub(crate) fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.path().join(name)
    }

    pub(crate) fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {name}"), e))
    }

    pub(crate) fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.target).map_err(|e| CliError::io(format!("creating {}", self.target.display()), e))?;
        let mut written = Vec::with_capacity(self.names.len());
        for name in &self.names {
            let dest = self.target.join(name);
            fs::rename(self.dir.path().join(name), &dest)
                .map_err(|e| CliError::io(format!("moving {name} into {}", self.target.display()), e))?;
            written.push(dest);
        }
        Ok(written)
    }
}
