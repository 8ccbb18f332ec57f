//! Advisory lock on `<palace>/.lock` shared with other processes.
//!
//! `flock` locks belong to the open file, not the thread, so in-process
//! readers are counted and only the first takes (and the last releases)
//! the shared lock.

use std::fs::{File, OpenOptions};
use std::path::Path;

use parking_lot::Mutex;

use crate::error::Result;

pub(crate) struct FileGate {
    file: File,
    readers: Mutex<usize>,
}

pub(crate) struct SharedGuard<'a>(&'a FileGate);

pub(crate) struct ExclusiveGuard<'a>(&'a FileGate);

impl FileGate {
    pub fn open(path: &Path) -> Result<FileGate> {
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(path)?;
        Ok(FileGate {
            file,
            readers: Mutex::new(0),
        })
    }

    pub fn shared(&self) -> Result<SharedGuard<'_>> {
        let mut n = self.readers.lock();
        if *n == 0 {
            self.file.lock_shared()?;
        }
        *n += 1;
        Ok(SharedGuard(self))
    }

    /// Callers must already exclude in-process readers.
    pub fn exclusive(&self) -> Result<ExclusiveGuard<'_>> {
        self.file.lock()?;
        Ok(ExclusiveGuard(self))
    }
}

impl Drop for SharedGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.readers.lock();
        *n -= 1;
        if *n == 0 {
            let _ = self.0.file.unlock();
        }
    }
}

impl Drop for ExclusiveGuard<'_> {
    fn drop(&mut self) {
        let _ = self.0.file.unlock();
    }
}
