//! Artifact directory management.
//!
//! Every experiment writes its files through an [`OutputDir`], which tracks
//! what has been created. If the run fails before [`OutputDir::finish`] is
//! called, the guard's drop removes everything it wrote, so a failed run
//! leaves no partial outputs behind.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
    completed: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            completed: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Create `name` inside the directory and stream content into it through
    /// the closure. The file is registered for cleanup before writing starts,
    /// so an error mid-write still gets the partial file removed.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> io::Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> io::Result<()> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }

    /// Mark the run as successful; written files are kept.
    pub fn finish(mut self) {
        self.completed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.completed {
            for path in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}
