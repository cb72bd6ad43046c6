//! Atomic file writes for the registry data directory.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use uuid::Uuid;

use crate::failpoint;

pub(crate) const TMP_MARKER: &str = ".tmp-";

fn temp_path(target: &Path) -> PathBuf {
    let mut name = target.file_name().unwrap_or_default().to_os_string();
    name.push(format!("{TMP_MARKER}{}", Uuid::new_v4().simple()));
    target.with_file_name(name)
}

/// Writes `bytes` to a temp file beside `target`, syncs it and renames it
/// over `target`. `label` names the failpoints hit along the way
/// (`<label>:partial-write`, `<label>:before-rename`, `<label>:after-rename`).
pub(crate) fn write_atomic(target: &Path, bytes: &[u8], label: &str) -> std::io::Result<()> {
    let tmp = temp_path(target);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        let half = bytes.len() / 2;
        f.write_all(&bytes[..half])?;
        if std::env::var_os(failpoint::ENV).is_some() {
            f.flush()?;
            failpoint::hit(&format!("{label}:partial-write"));
        }
        f.write_all(&bytes[half..])?;
        f.sync_all()?;
        drop(f);
        failpoint::hit(&format!("{label}:before-rename"));
        fs::rename(&tmp, target)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result?;
    failpoint::hit(&format!("{label}:after-rename"));
    Ok(())
}

/// Removes temp files left behind by a crash mid-write.
pub(crate) fn sweep_temp_files(dir: &Path) -> std::io::Result<usize> {
    let mut removed = 0;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_name().to_string_lossy().contains(TMP_MARKER) {
            fs::remove_file(entry.path())?;
            removed += 1;
        }
    }
    Ok(removed)
}
