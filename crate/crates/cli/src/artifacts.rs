//! Stage outputs that are removed again if the stage does not finish.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Files are written through a temporary sibling and renamed into place.
/// Dropping the set without [`commit`](Self::commit) deletes everything it
/// wrote.
#[derive(Debug, Default)]
pub struct Artifacts {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = dir.join(format!(".{name}.partial"));
        let written = fs::write(&tmp, bytes.as_ref()).and_then(|()| fs::rename(&tmp, path));
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            return Err(e).with_context(|| format!("cannot write {}", path.display()));
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}
