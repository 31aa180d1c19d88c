//! Pose files (JSON).
//!
//! ```json
//! {
//!   "units": "mm",
//!   "fps": 30.0,
//!   "up_axis": "z",
//!   "body": { "joint_names": ["pelvis", ...], "positions": [[[x, y, z], ...], ...] },
//!   "head": { "rotations": [[[r00, r01, r02], [..], [..]], ...], "translations": [[x, y, z], ...] }
//! }
//! ```
//!
//! `units` and `fps` are required; `body` and `head` are each optional.
//! Positions are frame-major (`T` arrays of `J` points). Rotation matrices
//! are row-major.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{HeadPoseSequence, JointTrajectory, PoseSet, UpAxis};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    units: String,
    fps: f64,
    #[serde(default)]
    up_axis: UpAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<BodyRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<HeadRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joint_names: Option<Vec<String>>,
    positions: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadRecord {
    rotations: Vec<[[f64; 3]; 3]>,
    translations: Vec<[f64; 3]>,
}

/// Contents of one pose file.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub fps: f64,
    pub up_axis: UpAxis,
    pub body: Option<JointTrajectory>,
    pub head: Option<HeadPoseSequence>,
}

impl PoseRecord {
    /// Both parts, as needed by the full metric suite.
    pub fn into_pose_set(self) -> Result<PoseSet> {
        match (self.body, self.head) {
            (Some(body), Some(head)) => Ok(PoseSet { body, head }),
            (None, _) => Err(Error::Schema("pose file has no `body` section".into())),
            (_, None) => Err(Error::Schema("pose file has no `head` section".into())),
        }
    }
}

impl From<&PoseSet> for PoseRecord {
    fn from(p: &PoseSet) -> Self {
        Self {
            fps: p.body.fps(),
            up_axis: p.body.up_axis(),
            body: Some(p.body.clone()),
            head: Some(p.head.clone()),
        }
    }
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match text[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return text.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(text.len())
}

pub fn decode_poses(bytes: &[u8]) -> Result<PoseRecord> {
    let file: PoseFile = serde_json::from_slice(bytes).map_err(|e| {
        let at = byte_offset(bytes, e.line(), e.column());
        match e.classify() {
            serde_json::error::Category::Data => Error::Schema(format!("{e} (byte {at})")),
            _ => Error::format(at, e.to_string()),
        }
    })?;
    if file.units != "mm" {
        return Err(Error::Schema(format!(
            "units must be \"mm\", got {:?}",
            file.units
        )));
    }
    let body = file
        .body
        .map(|b| {
            let frames = b.positions.len();
            let joints = b.positions.first().map_or(0, Vec::len);
            if let Some(t) = b.positions.iter().position(|f| f.len() != joints) {
                return Err(Error::Schema(format!(
                    "body frame {t} has {} joints, frame 0 has {joints}",
                    b.positions[t].len()
                )));
            }
            let pos = b
                .positions
                .into_iter()
                .flatten()
                .map(Vector3::from)
                .collect();
            JointTrajectory::new(frames, joints, pos, file.fps, file.up_axis, b.joint_names)
                .map_err(|e| Error::Schema(format!("body: {e}")))
        })
        .transpose()?;
    let head = file
        .head
        .map(|h| {
            let rotations = h
                .rotations
                .iter()
                .map(|r| Matrix3::from_fn(|i, j| r[i][j]))
                .collect();
            let translations = h.translations.into_iter().map(Vector3::from).collect();
            HeadPoseSequence::new(rotations, translations)
                .map_err(|e| Error::Schema(format!("head: {e}")))
        })
        .transpose()?;
    if !(file.fps > 0.0 && file.fps.is_finite()) {
        return Err(Error::Schema(format!(
            "fps must be positive, got {}",
            file.fps
        )));
    }
    Ok(PoseRecord {
        fps: file.fps,
        up_axis: file.up_axis,
        body,
        head,
    })
}

pub fn encode_poses(record: &PoseRecord) -> Vec<u8> {
    let file = PoseFile {
        units: "mm".into(),
        fps: record.fps,
        up_axis: record.up_axis,
        body: record.body.as_ref().map(|b| BodyRecord {
            joint_names: b.joint_names().map(<[String]>::to_vec),
            positions: (0..b.frames())
                .map(|t| b.frame(t).iter().map(|p| [p.x, p.y, p.z]).collect())
                .collect(),
        }),
        head: record.head.as_ref().map(|h| HeadRecord {
            rotations: h
                .rotations()
                .iter()
                .map(|r| std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])))
                .collect(),
            translations: h.translations().iter().map(|t| [t.x, t.y, t.z]).collect(),
        }),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("pose file serializes");
    out.push(b'\n');
    out
}

pub fn read_poses(path: &Path) -> Result<PoseRecord> {
    super::in_file(path, decode_poses(&super::read_file(path)?))
}

pub fn write_poses(path: &Path, record: &PoseRecord) -> Result<()> {
    super::write_atomic(path, &encode_poses(record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_record(frames: usize) -> PoseRecord {
        let body = JointTrajectory::new(
            frames,
            2,
            vec![Vector3::zeros(); frames * 2],
            30.0,
            UpAxis::Z,
            Some(vec!["pelvis".into(), "left_toe".into()]),
        )
        .unwrap();
        let head = HeadPoseSequence::new(
            vec![Matrix3::identity(); frames],
            vec![Vector3::zeros(); frames],
        )
        .unwrap();
        PoseRecord {
            fps: 30.0,
            up_axis: UpAxis::Z,
            body: Some(body),
            head: Some(head),
        }
    }

    #[test]
    fn identity_round_trip() {
        let r = identity_record(4);
        let bytes = encode_poses(&r);
        assert_eq!(decode_poses(&bytes).unwrap(), r);
        assert_eq!(encode_poses(&decode_poses(&bytes).unwrap()), bytes);
    }

    #[test]
    fn missing_fps_is_schema_error() {
        let err = decode_poses(br#"{"units": "mm"}"#).unwrap_err();
        assert!(
            matches!(err, Error::Schema(ref m) if m.contains("fps")),
            "{err}"
        );
    }

    #[test]
    fn wrong_units_and_syntax() {
        assert!(matches!(
            decode_poses(br#"{"units": "m", "fps": 30}"#),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            decode_poses(b"{\n  \"units\": \"mm\",\n  \"fps\": 30,,\n}"),
            Err(Error::Format { offset: 31, .. })
        ));
        assert!(decode_poses(
            br#"{"units": "mm", "fps": 30, "body": {"positions": [[[0,0,0]],[]]}}"#
        )
        .is_err());
        assert!(decode_poses(br#"{"units": "mm", "fps": 30, "head": {"rotations": [[[2,0,0],[0,1,0],[0,0,1]]], "translations": [[0,0,0]]}}"#).is_err());
    }

    #[test]
    fn pose_set_needs_both_parts() {
        let mut r = identity_record(2);
        r.head = None;
        assert!(r.into_pose_set().is_err());
    }

    proptest! {
        #[test]
        fn random_round_trip(
            pos in prop::collection::vec((-2e3f64..2e3, -2e3f64..2e3, -2e3f64..2e3), 6),
            angles in prop::collection::vec(-3.1f64..3.1, 2),
            fps in 1.0f64..120.0,
        ) {
            let body = JointTrajectory::new(
                2, 3, pos.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect(), fps, UpAxis::Y, None,
            ).unwrap();
            let rots = angles
                .iter()
                .map(|&a| *nalgebra::Rotation3::from_euler_angles(a, -a / 2.0, a / 3.0).matrix())
                .collect();
            let head = HeadPoseSequence::new(rots, vec![Vector3::new(1.5, -2.25, 1e3); 2]).unwrap();
            let r = PoseRecord { fps, up_axis: UpAxis::Y, body: Some(body), head: Some(head) };
            let back = decode_poses(&encode_poses(&r)).unwrap();
            let (b0, b1) = (r.body.as_ref().unwrap(), back.body.as_ref().unwrap());
            for (a, b) in b0.positions().iter().zip(b1.positions()) {
                prop_assert!((a - b).amax() <= 1e-9);
            }
            prop_assert_eq!(back, r);
        }
    }
}
