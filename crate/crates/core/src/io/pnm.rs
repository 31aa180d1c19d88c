//! Netpbm images: plain PBM (`P1`) for binary masks, plain PGM (`P2`,
//! maxval 65535) for soft masks, and PGM/PPM frames (`P2`, `P3`, `P5`, `P6`)
//! for event synthesis input.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::segmentation::SoftMask;
use crate::synth::FrameSequence;

/// Maxval used when writing soft masks.
pub const SOFT_MAXVAL: u32 = 65535;

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self
                    .bytes
                    .get(self.pos)
                    .is_some_and(|&c| c != b'\n' && c != b'\r')
                {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn magic(&mut self) -> Result<[u8; 2]> {
        match self.bytes {
            [b'P', d @ b'1'..=b'6', ..] => {
                self.pos = 2;
                Ok([b'P', *d])
            }
            _ => Err(Error::format(0, "not a netpbm file (bad magic)")),
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u32))
                .ok_or_else(|| Error::format(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(if self.pos >= self.bytes.len() {
                Error::format(start, format!("unexpected end of file, expected {what}"))
            } else {
                Error::format(start, format!("expected {what}"))
            });
        }
        Ok(value)
    }

    /// One `0`/`1` digit, whitespace optional between digits.
    fn bit(&mut self) -> Result<bool> {
        self.skip_space();
        match self.bytes.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            Some(_) => Err(Error::format(self.pos, "expected a 0 or 1 pixel")),
            None => Err(Error::format(
                self.pos,
                "unexpected end of file in pixel data",
            )),
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        self.skip_space();
        if self.pos < self.bytes.len() {
            return Err(Error::format(
                self.pos,
                "trailing data after the last pixel",
            ));
        }
        Ok(())
    }

    fn remaining(&self) -> usize {
        self.bytes.len().saturating_sub(self.pos)
    }
}

struct Dims {
    width: usize,
    height: usize,
}

fn dims(c: &mut Cursor<'_>, min_bytes_per_sample: usize, channels: usize) -> Result<Dims> {
    let at = c.pos;
    let width = c.number("width")? as usize;
    let height = c.number("height")? as usize;
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(at, "image dimensions overflow"))?;
    // Every sample needs at least this many bytes; reject before allocating.
    if samples.saturating_mul(min_bytes_per_sample) > c.remaining() + 1 {
        return Err(Error::format(
            c.bytes.len(),
            format!("truncated: {width}×{height} image needs more pixel data"),
        ));
    }
    Ok(Dims { width, height })
}

/// Decodes a plain PBM (`P1`) mask.
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let mut c = Cursor::new(bytes);
    if c.magic()? != *b"P1" {
        return Err(Error::format(0, "expected a plain PBM (P1) mask"));
    }
    let d = dims(&mut c, 1, 1)?;
    let bits = (0..d.width * d.height)
        .map(|_| c.bit())
        .collect::<Result<Vec<_>>>()?;
    c.expect_end()?;
    BinaryMask::from_bits(d.height, d.width, bits)
}

/// Plain PBM, one text row per image row.
pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P1\n{} {}\n", mask.width(), mask.height()).into_bytes();
    for row in mask.bits().chunks(mask.width().max(1)) {
        for (i, &b) in row.iter().enumerate() {
            if i > 0 {
                out.push(b' ');
            }
            out.push(if b { b'1' } else { b'0' });
        }
        out.push(b'\n');
    }
    out
}

/// Samples of a `P2`/`P3`/`P5`/`P6` image scaled to `[0, 1]`.
struct Gray {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u32,
    samples: Vec<u32>,
}

fn decode_graymap(bytes: &[u8]) -> Result<Gray> {
    let mut c = Cursor::new(bytes);
    let magic = c.magic()?;
    let (channels, binary) = match &magic {
        b"P2" => (1, false),
        b"P3" => (3, false),
        b"P5" => (1, true),
        b"P6" => (3, true),
        _ => {
            return Err(Error::format(
                0,
                "expected a PGM or PPM image (P2, P3, P5, P6)",
            ))
        }
    };
    let d = dims(&mut c, 1, channels)?;
    let max_at = c.pos;
    let maxval = c.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            max_at,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let n = d.width * d.height * channels;
    let mut samples = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(c.pos) {
            Some(b) if b.is_ascii_whitespace() => c.pos += 1,
            _ => {
                return Err(Error::format(
                    c.pos,
                    "expected whitespace before raster data",
                ))
            }
        }
        let width = if maxval > 255 { 2 } else { 1 };
        let need = n * width;
        let raster = &bytes[c.pos..];
        if raster.len() < need {
            return Err(Error::format(
                bytes.len(),
                format!("truncated raster: need {need} bytes"),
            ));
        }
        if raster.len() > need {
            return Err(Error::format(
                c.pos + need,
                "trailing data after the raster",
            ));
        }
        for (i, chunk) in raster.chunks_exact(width).enumerate() {
            let v = if width == 2 {
                u16::from_be_bytes([chunk[0], chunk[1]]) as u32
            } else {
                chunk[0] as u32
            };
            if v > maxval {
                return Err(Error::format(
                    c.pos + i * width,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            samples.push(v);
        }
    } else {
        for _ in 0..n {
            let at = c.pos;
            let v = c.number("sample")?;
            if v > maxval {
                return Err(Error::format(
                    at,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            samples.push(v);
        }
        c.expect_end()?;
    }
    Ok(Gray {
        width: d.width,
        height: d.height,
        channels,
        maxval,
        samples,
    })
}

/// Decodes a PGM soft mask; values are `sample / maxval`.
pub fn decode_soft_mask(bytes: &[u8]) -> Result<SoftMask> {
    let g = decode_graymap(bytes)?;
    if g.channels != 1 {
        return Err(Error::format(0, "soft masks must be single-channel PGM"));
    }
    let scale = g.maxval as f64;
    SoftMask::new(
        g.height,
        g.width,
        g.samples.iter().map(|&v| v as f64 / scale).collect(),
    )
}

/// Plain PGM with maxval 65535; each value is rounded to the nearest level.
pub fn encode_soft_mask(mask: &SoftMask) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n{SOFT_MAXVAL}\n", mask.width(), mask.height()).into_bytes();
    for row in mask.values().chunks(mask.width().max(1)) {
        let line: Vec<String> = row
            .iter()
            .map(|v| ((v * SOFT_MAXVAL as f64).round() as u32).to_string())
            .collect();
        out.extend_from_slice(line.join(" ").as_bytes());
        out.push(b'\n');
    }
    out
}

/// Decodes a PGM or PPM frame into row-major intensities in `[0, 1]`.
/// Color frames are converted with BT.601 luma weights.
pub fn decode_gray_frame(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let g = decode_graymap(bytes)?;
    let scale = g.maxval as f64;
    let values = if g.channels == 1 {
        g.samples
            .iter()
            .map(|&v| (v as f64 / scale) as f32)
            .collect()
    } else {
        g.samples
            .chunks_exact(3)
            .map(|px| {
                let y: f64 = px
                    .iter()
                    .zip(LUMA_WEIGHTS)
                    .map(|(&v, w)| v as f64 / scale * w)
                    .sum();
                y.clamp(0.0, 1.0) as f32
            })
            .collect()
    };
    Ok((g.width, g.height, values))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    super::in_file(path, decode_mask(&super::read_file(path)?))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    super::write_atomic(path, &encode_mask(mask))
}

pub fn read_soft_mask(path: &Path) -> Result<SoftMask> {
    super::in_file(path, decode_soft_mask(&super::read_file(path)?))
}

pub fn write_soft_mask(path: &Path, mask: &SoftMask) -> Result<()> {
    super::write_atomic(path, &encode_soft_mask(mask))
}

/// All `*.pbm` masks in a directory, sorted by file name.
pub fn read_mask_dir(dir: &Path) -> Result<Vec<BinaryMask>> {
    super::list_files(dir, &["pbm"])?
        .iter()
        .map(|p| read_mask(p))
        .collect()
}

/// All `*.pgm` soft masks in a directory, sorted by file name.
pub fn read_soft_mask_dir(dir: &Path) -> Result<Vec<SoftMask>> {
    super::list_files(dir, &["pgm"])?
        .iter()
        .map(|p| read_soft_mask(p))
        .collect()
}

/// Parses a timestamp list: one integer nanosecond value per line, `#`
/// comments allowed. Timestamps must be strictly increasing.
pub fn parse_timestamps(text: &str) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: u64 = line.parse().map_err(|_| {
            Error::Config(format!(
                "timestamps line {}: `{line}` is not an integer",
                n + 1
            ))
        })?;
        if let Some(&prev) = out.last() {
            if t == prev {
                return Err(Error::Config(format!(
                    "timestamps line {}: duplicate timestamp {t}",
                    n + 1
                )));
            }
            if t < prev {
                return Err(Error::Config(format!(
                    "timestamps line {}: {t} is earlier than {prev}",
                    n + 1
                )));
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Loads `*.pgm`/`*.ppm` frames from `dir` (sorted by name) with timestamps
/// from `timestamps` (defaults to `dir/timestamps.txt`).
pub fn read_frame_dir(dir: &Path, timestamps: Option<&Path>) -> Result<FrameSequence> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "frame directory not found"),
        ));
    }
    let ts_path = timestamps.map_or_else(|| dir.join("timestamps.txt"), Path::to_path_buf);
    let ts_bytes = super::read_file(&ts_path)?;
    let ts_text = String::from_utf8(ts_bytes)
        .map_err(|_| Error::Config(format!("{}: not UTF-8 text", ts_path.display())))?;
    let ts = parse_timestamps(&ts_text)?;
    let files = super::list_files(dir, &["pgm", "ppm"])?;
    if files.is_empty() {
        return Err(Error::Config(format!(
            "{}: no PGM/PPM frames",
            dir.display()
        )));
    }
    if files.len() != ts.len() {
        return Err(Error::Config(format!(
            "{} frames but {} timestamps in {}",
            files.len(),
            ts.len(),
            ts_path.display()
        )));
    }
    let mut size = None;
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let (w, h, v) = super::in_file(f, decode_gray_frame(&super::read_file(f)?))?;
        match size {
            None => size = Some((w, h)),
            Some(s) if s != (w, h) => {
                return Err(Error::Shape(format!(
                    "{}: {w}×{h} frame in a {}×{} sequence",
                    f.display(),
                    s.0,
                    s.1
                )))
            }
            _ => {}
        }
        frames.push(v);
    }
    let (w, h) = size.unwrap_or((0, 0));
    let (w, h) = (
        u16::try_from(w).map_err(|_| Error::Shape(format!("frame width {w} exceeds 65535")))?,
        u16::try_from(h).map_err(|_| Error::Shape(format!("frame height {h} exceeds 65535")))?,
    );
    FrameSequence::new(w, h, frames, ts)
}
