//! Artifacts are written to a private staging directory first and copied
//! into the output directory only once the whole command has succeeded.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use latentbench::io;

use crate::CliError;

pub struct Stage {
    dir: PathBuf,
}

impl Stage {
    pub fn new() -> Result<Self, CliError> {
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let dir = std::env::temp_dir().join(format!("latentbench-stage-{}-{nanos}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| latentbench::Error::io(&dir, e))?;
        Ok(Stage { dir })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(rel);
        std::fs::create_dir_all(&p).map_err(|e| latentbench::Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        Ok(io::write_atomic(&self.path(rel), bytes)?)
    }

    pub fn write_json<T: serde::Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        Ok(io::write_json(&self.path(rel), value)?)
    }

    /// Copies every staged file into `out`, each one atomically. Returns the
    /// relative paths written, sorted.
    pub fn commit(self, out: &Path) -> Result<Vec<String>, CliError> {
        let mut files = Vec::new();
        collect(&self.dir, &self.dir, &mut files)?;
        files.sort();
        for rel in &files {
            let src = self.dir.join(rel);
            let bytes = io::read_bytes(&src)?;
            io::write_atomic(&out.join(rel), &bytes)?;
        }
        Ok(files.iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect())
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| latentbench::Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| latentbench::Error::io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("inside stage").to_path_buf());
        }
    }
    Ok(())
}
