//! Filesystem helpers shared by every writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{PanError, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PanError::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| PanError::arg(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| PanError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| PanError::io(&tmp, e))?;
    f.sync_all().map_err(|e| PanError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| PanError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| PanError::io(path, e))
}
