//! Atomic artifact writes: a file appears complete or not at all.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through a temporary file in the same directory.
    pub fn write_with(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let target = self.path(name);
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(io)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            body(&mut w)?;
            w.flush().map_err(io)?;
        }
        tmp.persist(&target).map_err(|e| io(e.error))?;
        Ok(target)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| Ok(w.write_all(contents.as_bytes())?))
    }
}
