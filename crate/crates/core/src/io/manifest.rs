//! Sequence manifests and dataset statistics.
//!
//! One JSON file per sequence:
//!
//! ```json
//! {
//!   "sequence_id": "recording_012_part_3",
//!   "split": "train",
//!   "frame_count": 150,
//!   "fps": 30.0,
//!   "events": "recording_012_part_3/events.evt",
//!   "masks": "recording_012_part_3/masks",
//!   "poses": "recording_012_part_3/poses.json",
//!   "meshes": "recording_012_part_3/meshes"
//! }
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub split: Split,
    pub frame_count: usize,
    pub fps: f64,
    pub events: String,
    pub masks: String,
    pub poses: String,
    pub meshes: String,
}

/// Standard sequence length of the dataset, in frames.
pub const SEQUENCE_FRAMES: usize = 150;

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if self.sequence_id.trim().is_empty() {
            return Err(Error::Schema("empty sequence_id".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::Schema(format!(
                "{}: frame_count must be positive",
                self.sequence_id
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Schema(format!(
                "{}: fps must be positive",
                self.sequence_id
            )));
        }
        for (name, p) in [
            ("events", &self.events),
            ("masks", &self.masks),
            ("poses", &self.poses),
            ("meshes", &self.meshes),
        ] {
            if Path::new(p).is_absolute() || p.starts_with('/') || p.starts_with('\\') {
                return Err(Error::Schema(format!(
                    "{}: `{name}` path must be relative to the dataset root, got `{p}`",
                    self.sequence_id
                )));
            }
        }
        Ok(())
    }
}

pub fn decode_manifest(bytes: &[u8]) -> Result<SequenceManifest> {
    let m: SequenceManifest = serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(e.to_string()),
        _ => Error::format(
            bytes
                .split_inclusive(|&b| b == b'\n')
                .take(e.line().saturating_sub(1))
                .map(<[u8]>::len)
                .sum::<usize>()
                + e.column().saturating_sub(1),
            e.to_string(),
        ),
    })?;
    m.validate()?;
    Ok(m)
}

pub fn encode_manifest(m: &SequenceManifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(m).expect("manifest serializes");
    out.push(b'\n');
    out
}

/// All `*.json` manifests in `dir`, sorted by file name.
pub fn read_manifest_dir(dir: &Path) -> Result<Vec<SequenceManifest>> {
    super::list_files(dir, &["json"])?
        .iter()
        .map(|p| super::in_file(p, decode_manifest(&super::read_file(p)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_sequences: usize,
    pub n_frames: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sequences = {}", self.n_sequences)?;
        writeln!(f, "frames = {}", self.n_frames)?;
        writeln!(f, "train = {}", self.n_train)?;
        writeln!(f, "test = {}", self.n_test)
    }
}

/// Counts sequences, frames and split sizes. Duplicate ids are an error.
pub fn dataset_stats(manifests: &[SequenceManifest]) -> Result<DatasetStats> {
    let mut seen = HashSet::new();
    let mut stats = DatasetStats::default();
    for m in manifests {
        if !seen.insert(m.sequence_id.as_str()) {
            return Err(Error::DuplicateId(m.sequence_id.clone()));
        }
        stats.n_sequences += 1;
        stats.n_frames += m.frame_count;
        match m.split {
            Split::Train => stats.n_train += 1,
            Split::Test => stats.n_test += 1,
        }
    }
    Ok(stats)
}

/// Non-fatal observations: sequences that deviate from the standard length
/// and mixed frame rates.
pub fn consistency_warnings(manifests: &[SequenceManifest]) -> Vec<String> {
    let mut out = Vec::new();
    let odd: Vec<&str> = manifests
        .iter()
        .filter(|m| m.frame_count != SEQUENCE_FRAMES)
        .map(|m| m.sequence_id.as_str())
        .collect();
    if !odd.is_empty() {
        out.push(format!(
            "{} sequence(s) are not {SEQUENCE_FRAMES} frames long (first: {})",
            odd.len(),
            odd[0]
        ));
    }
    let mut rates: BTreeMap<String, usize> = BTreeMap::new();
    for m in manifests {
        *rates.entry(m.fps.to_string()).or_default() += 1;
    }
    if rates.len() > 1 {
        let list: Vec<String> = rates.iter().map(|(f, n)| format!("{f} fps ×{n}")).collect();
        out.push(format!("mixed frame rates: {}", list.join(", ")));
    }
    out
}
