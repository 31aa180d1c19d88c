//! File formats, manifests and dataset statistics.
//!
//! Every reader has a byte-slice decoder (`decode_*`) that never panics on
//! malformed input and reports the byte offset of the first problem. Writers
//! are canonical: the same value always produces the same bytes. File
//! writes go through a temporary file in the target directory followed by a
//! rename.

pub mod events;
pub mod manifest;
pub mod mesh;
pub mod pnm;
pub mod poses;
pub mod voxel;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use events::{decode_events, encode_events, read_events, write_events};
pub use manifest::{dataset_stats, read_manifest_dir, DatasetStats, SequenceManifest, Split};
pub use mesh::{decode_mesh, encode_mesh, read_mesh, write_mesh};
pub use pnm::{
    decode_gray_frame, decode_mask, decode_soft_mask, encode_mask, encode_soft_mask,
    read_frame_dir, read_mask, read_mask_dir, read_soft_mask, read_soft_mask_dir, write_mask,
    write_soft_mask,
};
pub use poses::{decode_poses, encode_poses, read_poses, write_poses, PoseRecord};
pub use voxel::{decode_voxel_grid, encode_voxel_grid, read_voxel_grid, write_voxel_grid};

/// Reads a whole file, attaching the path to I/O errors.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Files in `dir` with one of `extensions`, sorted by name.
pub fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Prefixes a decode error with the file it came from.
pub(crate) fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}
