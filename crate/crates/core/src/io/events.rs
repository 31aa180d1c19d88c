//! `EVT1` binary event files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVT1"
//! 4       2     width  (u16)
//! 6       2     height (u16)
//! 8       8     event count N (u64)
//! 16      16·N  records: x u16, y u16, t u64 (ns), p i8, 3 zero pad bytes
//! ```
//!
//! The stream window is not stored. Decoded streams get the window
//! `[0, t_last + 1)`, or `[0, 0)` when there are no events.

use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};

pub const MAGIC: &[u8; 4] = b"EVT1";
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;

/// Encodes a valid stream. Invalid streams are refused.
pub fn encode_events(stream: &EventStream) -> Result<Vec<u8>> {
    let report = stream.validate();
    if !report.is_ok() {
        return Err(Error::Invalid(format!(
            "refusing to write stream: {report}"
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.extend_from_slice(&e.t.to_le_bytes());
        out.push(e.p as u8);
        out.extend_from_slice(&[0; 3]);
    }
    Ok(out)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    let mut a = [0u8; 8];
    a.copy_from_slice(&b[at..at + 8]);
    u64::from_le_bytes(a)
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"EVT1\""));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), "truncated header"));
    }
    let width = u16_at(bytes, 4);
    let height = u16_at(bytes, 6);
    let count = u64_at(bytes, 8);
    let body = bytes.len() - HEADER_LEN;
    let expected = count.checked_mul(RECORD_LEN as u64);
    match expected {
        Some(n) if n == body as u64 => {}
        Some(n) if n > body as u64 => {
            let whole = body / RECORD_LEN;
            return Err(Error::format(
                HEADER_LEN + whole * RECORD_LEN,
                format!("truncated: header declares {count} events, file holds {whole} complete records"),
            ));
        }
        Some(_) => {
            return Err(Error::format(
                HEADER_LEN + count as usize * RECORD_LEN,
                "trailing bytes after the last record",
            ))
        }
        None => return Err(Error::format(8, format!("event count {count} overflows"))),
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut prev_t = 0u64;
    for (i, rec) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let at = HEADER_LEN + i * RECORD_LEN;
        let e = Event::new(
            u16_at(rec, 0),
            u16_at(rec, 2),
            u64_at(rec, 4),
            rec[12] as i8,
        );
        if e.x >= width || e.y >= height {
            return Err(Error::format(
                at,
                format!("event {i} at ({}, {}) outside {width}×{height}", e.x, e.y),
            ));
        }
        if e.p != 1 && e.p != -1 {
            return Err(Error::format(
                at + 12,
                format!("event {i} has polarity {}", e.p),
            ));
        }
        if rec[13..16] != [0, 0, 0] {
            return Err(Error::format(
                at + 13,
                format!("event {i} has non-zero padding"),
            ));
        }
        if e.t < prev_t {
            return Err(Error::format(
                at + 4,
                format!("event {i} is out of time order"),
            ));
        }
        if e.t == u64::MAX {
            return Err(Error::format(
                at + 4,
                format!("event {i} timestamp overflows the window"),
            ));
        }
        prev_t = e.t;
        events.push(e);
    }
    let t_end = events.last().map_or(0, |e| e.t + 1);
    Ok(EventStream::new_unchecked(width, height, 0, t_end, events))
}

pub fn read_events(path: &Path) -> Result<EventStream> {
    super::in_file(path, decode_events(&super::read_file(path)?))
}

pub fn write_events(path: &Path, stream: &EventStream) -> Result<()> {
    super::write_atomic(path, &encode_events(stream)?)
}
