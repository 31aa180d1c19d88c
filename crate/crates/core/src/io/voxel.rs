//! Voxel grid files: a raw little-endian `f32` payload in `[T][B][H][W]`
//! order plus a `key = value` text header stored next to it as
//! `<payload>.hdr`.
//!
//! ```text
//! format = VOX1
//! frames = 150
//! bins = 3
//! height = 480
//! width = 640
//! fps = 30
//! normalization = frame        # frame | bin | grid | none
//! mask_applied = false
//! dtype = f32le
//! layout = TBHW
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::voxel::{NormMode, VoxelGrid};

pub const FORMAT_TAG: &str = "VOX1";

/// Sidecar header path for a payload path.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_os_string();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn encode_voxel_grid(grid: &VoxelGrid) -> (String, Vec<u8>) {
    let header = format!(
        "format = {FORMAT_TAG}\nframes = {}\nbins = {}\nheight = {}\nwidth = {}\nfps = {}\n\
         normalization = {}\nmask_applied = {}\ndtype = f32le\nlayout = TBHW\n",
        grid.frames(),
        grid.bins(),
        grid.height(),
        grid.width(),
        grid.fps(),
        grid.normalization().map_or("none", NormMode::as_str),
        grid.mask_applied(),
    );
    let mut payload = Vec::with_capacity(grid.values().len() * 4);
    for v in grid.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    (header, payload)
}

struct Header {
    frames: usize,
    bins: usize,
    height: usize,
    width: usize,
    fps: f64,
    norm: Option<NormMode>,
    mask_applied: bool,
}

fn parse_header(text: &[u8]) -> Result<Header> {
    let text = std::str::from_utf8(text)
        .map_err(|e| Error::format(e.valid_up_to(), "header is not valid UTF-8"))?;
    let mut fields: Vec<(&str, &str, usize)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| {
            Error::format(start, format!("expected `key = value`, got `{content}`"))
        })?;
        let k = k.trim();
        if fields.iter().any(|(seen, _, _)| *seen == k) {
            return Err(Error::format(start, format!("duplicate key `{k}`")));
        }
        fields.push((k, v.trim(), start));
    }
    let get = |key: &str| -> Result<(&str, usize)> {
        fields
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, v, at)| (*v, *at))
            .ok_or_else(|| Error::format(text.len(), format!("missing header key `{key}`")))
    };
    let count = |key: &str| -> Result<usize> {
        let (v, at) = get(key)?;
        v.parse()
            .map_err(|_| Error::format(at, format!("`{key}` is not a count: `{v}`")))
    };
    let expect = |key: &str, want: &str| -> Result<()> {
        let (v, at) = get(key)?;
        if v == want {
            Ok(())
        } else {
            Err(Error::format(
                at,
                format!("unsupported {key} `{v}`, expected `{want}`"),
            ))
        }
    };
    if let Some((k, _, at)) = fields.iter().find(|(k, _, _)| {
        !matches!(
            *k,
            "format"
                | "frames"
                | "bins"
                | "height"
                | "width"
                | "fps"
                | "normalization"
                | "mask_applied"
                | "dtype"
                | "layout"
        )
    }) {
        return Err(Error::format(*at, format!("unknown header key `{k}`")));
    }
    expect("format", FORMAT_TAG)?;
    expect("dtype", "f32le")?;
    expect("layout", "TBHW")?;
    let (fps_s, fps_at) = get("fps")?;
    let fps: f64 = fps_s
        .parse()
        .map_err(|_| Error::format(fps_at, format!("`fps` is not a number: `{fps_s}`")))?;
    let (norm_s, norm_at) = get("normalization")?;
    let norm = match norm_s {
        "none" => None,
        s => Some(
            s.parse::<NormMode>()
                .map_err(|e| Error::format(norm_at, e.to_string()))?,
        ),
    };
    let (mask_s, mask_at) = get("mask_applied")?;
    let mask_applied = match mask_s {
        "true" => true,
        "false" => false,
        s => {
            return Err(Error::format(
                mask_at,
                format!("`mask_applied` must be true or false, got `{s}`"),
            ))
        }
    };
    Ok(Header {
        frames: count("frames")?,
        bins: count("bins")?,
        height: count("height")?,
        width: count("width")?,
        fps,
        norm,
        mask_applied,
    })
}

/// Decodes a header and payload pair. Payload offsets are reported relative
/// to the payload file.
pub fn decode_voxel_grid(header: &[u8], payload: &[u8]) -> Result<VoxelGrid> {
    let h = parse_header(header)?;
    let cells = h
        .frames
        .checked_mul(h.bins)
        .and_then(|n| n.checked_mul(h.height))
        .and_then(|n| n.checked_mul(h.width));
    let expected = cells.and_then(|n| n.checked_mul(4));
    let Some(expected) = expected else {
        return Err(Error::format(0, "header dimensions overflow"));
    };
    if payload.len() < expected {
        return Err(Error::format(
            payload.len() - payload.len() % 4,
            format!(
                "truncated payload: expected {expected} bytes, got {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            expected,
            format!(
                "payload longer than the header shape ({} > {expected} bytes)",
                payload.len()
            ),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    VoxelGrid::from_parts(
        h.frames,
        h.bins,
        h.height,
        h.width,
        h.fps,
        h.norm,
        h.mask_applied,
        values,
    )
    .map_err(|e| Error::format(0, e.to_string()))
}

pub fn read_voxel_grid(path: &Path) -> Result<VoxelGrid> {
    let hdr_path = header_path(path);
    let header = super::read_file(&hdr_path)?;
    let payload = super::read_file(path)?;
    super::in_file(path, decode_voxel_grid(&header, &payload))
}

/// Writes the payload first and the header last, each atomically.
pub fn write_voxel_grid(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let (header, payload) = encode_voxel_grid(grid);
    super::write_atomic(path, &payload)?;
    super::write_atomic(&header_path(path), header.as_bytes())
}
