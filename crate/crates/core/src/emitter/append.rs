// SPDX-License-Identifier: Apache-2.0

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Largest record (bytes, including LF) written with a single unlocked
/// `write(2)`. POSIX only guarantees `PIPE_BUF` atomicity for pipes, but
/// `O_APPEND` writes of this size to local regular files are not interleaved
/// by Linux or the BSDs.
pub const ATOMIC_APPEND_MAX: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AppendMode {
    /// Single `O_APPEND` write for short lines, file lock for longer ones.
    #[default]
    Auto,
    /// Exclusive advisory lock around every append.
    Locked,
}

/// A file opened for whole-line appends that may be shared with other
/// writers, in this process or others.
#[derive(Debug)]
pub(crate) struct AppendFile {
    path: PathBuf,
    file: File,
    mode: AppendMode,
}

impl AppendFile {
    pub fn open(path: &Path, mode: AppendMode) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(AppendFile {
            path: path.to_path_buf(),
            file,
            mode,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self) -> &File {
        &self.file
    }

    pub fn lock(&self) -> Result<()> {
        self.file.lock().map_err(|e| Error::io(&self.path, e))
    }

    pub fn unlock(&self) -> Result<()> {
        self.file.unlock().map_err(|e| Error::io(&self.path, e))
    }

    /// Appends `bytes`, which must be one or more complete LF-terminated lines.
    pub fn append(&self, bytes: &[u8]) -> Result<()> {
        let io = |e| Error::io(&self.path, e);
        if self.mode == AppendMode::Auto && bytes.len() <= ATOMIC_APPEND_MAX {
            let written = (&self.file).write(bytes).map_err(io)?;
            if written == bytes.len() {
                return Ok(());
            }
            // Short write: the remainder can no longer be made atomic, finish it.
            return (&self.file).write_all(&bytes[written..]).map_err(io);
        }
        self.lock()?;
        let out = (&self.file).write_all(bytes).map_err(io);
        self.unlock()?;
        out
    }
}
