//! Egocentric pose evaluation: MPJPE, head orientation and translation
//! error, acceleration error and foot skating. Lengths are millimeters.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::validate_rotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UpAxis {
    #[serde(rename = "y")]
    Y,
    #[default]
    #[serde(rename = "z")]
    Z,
}

impl UpAxis {
    /// Index of the vertical coordinate and the two ground-plane coordinates.
    fn axes(self) -> (usize, [usize; 2]) {
        match self {
            UpAxis::Z => (2, [0, 1]),
            UpAxis::Y => (1, [0, 2]),
        }
    }
}

impl fmt::Display for UpAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpAxis::Y => "y",
            UpAxis::Z => "z",
        })
    }
}

impl FromStr for UpAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" | "Y" => Ok(UpAxis::Y),
            "z" | "Z" => Ok(UpAxis::Z),
            other => Err(Error::Config(format!(
                "unknown up axis `{other}` (expected y or z)"
            ))),
        }
    }
}

/// `T×J` joint positions in millimeters, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    frames: usize,
    joints: usize,
    positions: Vec<Vector3<f64>>,
    fps: f64,
    up_axis: UpAxis,
    joint_names: Option<Vec<String>>,
}

impl JointTrajectory {
    pub fn new(
        frames: usize,
        joints: usize,
        positions: Vec<Vector3<f64>>,
        fps: f64,
        up_axis: UpAxis,
        joint_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Invalid("trajectory needs at least one frame".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
        }
        if positions.len() != frames * joints {
            return Err(Error::Shape(format!(
                "{} positions for {frames} frames × {joints} joints",
                positions.len()
            )));
        }
        if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Invalid("trajectory has non-finite positions".into()));
        }
        if let Some(names) = &joint_names {
            if names.len() != joints {
                return Err(Error::Shape(format!(
                    "{} joint names for {joints} joints",
                    names.len()
                )));
            }
        }
        Ok(Self {
            frames,
            joints,
            positions,
            fps,
            up_axis,
            joint_names,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn up_axis(&self) -> UpAxis {
        self.up_axis
    }

    pub fn with_up_axis(mut self, up_axis: UpAxis) -> Self {
        self.up_axis = up_axis;
        self
    }

    pub fn joint_names(&self) -> Option<&[String]> {
        self.joint_names.as_deref()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn at(&self, frame: usize, joint: usize) -> &Vector3<f64> {
        &self.positions[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[Vector3<f64>] {
        &self.positions[frame * self.joints..(frame + 1) * self.joints]
    }

    /// Applies `f` to every position.
    pub fn map_positions(&self, f: impl Fn(usize, usize, &Vector3<f64>) -> Vector3<f64>) -> Self {
        let positions = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| f(i / self.joints.max(1), i % self.joints.max(1), p))
            .collect();
        Self {
            positions,
            ..self.clone()
        }
    }

    /// Indices of joints whose name mentions a toe, ankle or foot.
    pub fn foot_joints_by_name(&self) -> Vec<usize> {
        self.joint_names
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, n)| {
                let n = n.to_ascii_lowercase();
                n.contains("toe") || n.contains("ankle") || n.contains("foot")
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-frame head rotation and translation (millimeters).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPoseSequence {
    rotations: Vec<Matrix3<f64>>,
    translations: Vec<Vector3<f64>>,
}

impl HeadPoseSequence {
    pub fn new(rotations: Vec<Matrix3<f64>>, translations: Vec<Vector3<f64>>) -> Result<Self> {
        if rotations.len() != translations.len() {
            return Err(Error::Shape(format!(
                "{} rotations but {} translations",
                rotations.len(),
                translations.len()
            )));
        }
        for (i, r) in rotations.iter().enumerate() {
            validate_rotation(r).map_err(|e| Error::Invalid(format!("frame {i}: {e}")))?;
        }
        if translations
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Invalid("non-finite head translation".into()));
        }
        Ok(Self {
            rotations,
            translations,
        })
    }

    pub fn frames(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotations(&self) -> &[Matrix3<f64>] {
        &self.rotations
    }

    pub fn translations(&self) -> &[Vector3<f64>] {
        &self.translations
    }
}

/// Body joints and head trajectory for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSet {
    pub body: JointTrajectory,
    pub head: HeadPoseSequence,
}

fn check_same_shape(pred: &JointTrajectory, gt: &JointTrajectory) -> Result<()> {
    if (pred.frames, pred.joints) != (gt.frames, gt.joints) {
        return Err(Error::Shape(format!(
            "prediction has {}×{} (frames×joints), ground truth {}×{}",
            pred.frames, pred.joints, gt.frames, gt.joints
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn mpjpe_per_frame(pred: &JointTrajectory, gt: &JointTrajectory) -> Result<Vec<f64>> {
    check_same_shape(pred, gt)?;
    Ok((0..pred.frames)
        .map(|t| {
            let d: Vec<f64> = pred
                .frame(t)
                .iter()
                .zip(gt.frame(t))
                .map(|(a, b)| (a - b).norm())
                .collect();
            mean(&d)
        })
        .collect())
}

/// Mean Euclidean joint error over all frames and joints.
pub fn mpjpe(pred: &JointTrajectory, gt: &JointTrajectory) -> Result<f64> {
    check_same_shape(pred, gt)?;
    let d: Vec<f64> = pred
        .positions
        .iter()
        .zip(&gt.positions)
        .map(|(a, b)| (a - b).norm())
        .collect();
    Ok(mean(&d))
}

fn check_head(pred: &HeadPoseSequence, gt: &HeadPoseSequence) -> Result<()> {
    if pred.frames() != gt.frames() {
        return Err(Error::Shape(format!(
            "prediction has {} head frames, ground truth {}",
            pred.frames(),
            gt.frames()
        )));
    }
    Ok(())
}

/// `‖R_pred·R_gtᵀ − I‖_F` for each frame, evaluated as the equal
/// `‖R_pred − R_gt‖_F` so that identical rotations give exactly zero.
pub fn head_orientation_errors(pred: &HeadPoseSequence, gt: &HeadPoseSequence) -> Result<Vec<f64>> {
    check_head(pred, gt)?;
    for r in pred.rotations.iter().chain(&gt.rotations) {
        validate_rotation(r)?;
    }
    Ok(pred
        .rotations
        .iter()
        .zip(&gt.rotations)
        .map(|(rp, rg)| (rp - rg).norm())
        .collect())
}

/// Frame mean of the Frobenius orientation error.
pub fn head_orientation_error(pred: &HeadPoseSequence, gt: &HeadPoseSequence) -> Result<f64> {
    Ok(mean(&head_orientation_errors(pred, gt)?))
}

fn head_translation_errors(pred: &HeadPoseSequence, gt: &HeadPoseSequence) -> Result<Vec<f64>> {
    check_head(pred, gt)?;
    Ok(pred
        .translations
        .iter()
        .zip(&gt.translations)
        .map(|(a, b)| (a - b).norm())
        .collect())
}

/// Frame mean of the head position error.
pub fn head_translation_error(pred: &HeadPoseSequence, gt: &HeadPoseSequence) -> Result<f64> {
    Ok(mean(&head_translation_errors(pred, gt)?))
}

fn accel_per_frame(pred: &JointTrajectory, gt: &JointTrajectory) -> Result<Vec<f64>> {
    check_same_shape(pred, gt)?;
    if pred.fps != gt.fps {
        return Err(Error::Shape(format!(
            "prediction at {} fps, ground truth at {} fps",
            pred.fps, gt.fps
        )));
    }
    if pred.frames < 3 {
        return Err(Error::InsufficientFrames {
            needed: 3,
            got: pred.frames,
        });
    }
    let fps2 = pred.fps * pred.fps;
    let accel = |tr: &JointTrajectory, t: usize, j: usize| {
        (tr.at(t + 1, j) - 2.0 * tr.at(t, j) + tr.at(t - 1, j)) * fps2
    };
    Ok((1..pred.frames - 1)
        .map(|t| {
            let d: Vec<f64> = (0..pred.joints)
                .map(|j| (accel(pred, t, j) - accel(gt, t, j)).norm())
                .collect();
            mean(&d)
        })
        .collect())
}

/// Mean norm of the difference of central second differences, in mm/s².
pub fn accel_error(pred: &JointTrajectory, gt: &JointTrajectory) -> Result<f64> {
    Ok(mean(&accel_per_frame(pred, gt)?))
}

/// Foot-skating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootSkatingConfig {
    /// Height threshold `H` in millimeters.
    pub h_thresh_mm: f64,
    /// Floor height in millimeters.
    pub floor_mm: f64,
}

impl FootSkatingConfig {
    pub const DEFAULT_H_THRESH_MM: f64 = 50.0;
}

impl Default for FootSkatingConfig {
    fn default() -> Self {
        Self {
            h_thresh_mm: Self::DEFAULT_H_THRESH_MM,
            floor_mm: 0.0,
        }
    }
}

/// Contact weight `2 − 2^(h/H)`; heights below the floor count as contact.
pub fn foot_skating_weight(height_mm: f64, h_thresh_mm: f64) -> f64 {
    2.0 - (height_mm.max(0.0) / h_thresh_mm).exp2()
}

/// Per-step mean contribution (0 for steps without a qualifying joint), plus
/// the sum and count of all qualifying contributions.
fn foot_skating_steps(
    traj: &JointTrajectory,
    foot_joints: &[usize],
    cfg: &FootSkatingConfig,
) -> Result<(Vec<f64>, f64, usize)> {
    if foot_joints.is_empty() {
        return Err(Error::Invalid("no foot joints given".into()));
    }
    if let Some(&bad) = foot_joints.iter().find(|&&j| j >= traj.joints) {
        return Err(Error::Shape(format!(
            "foot joint {bad} out of range for {} joints",
            traj.joints
        )));
    }
    if !(cfg.h_thresh_mm > 0.0 && cfg.h_thresh_mm.is_finite()) {
        return Err(Error::Invalid(format!(
            "height threshold must be positive, got {}",
            cfg.h_thresh_mm
        )));
    }
    if traj.frames < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: traj.frames,
        });
    }
    let (up, [u, w]) = traj.up_axis.axes();
    let (mut total, mut count) = (0.0, 0usize);
    let mut per_step = Vec::with_capacity(traj.frames - 1);
    for t in 0..traj.frames - 1 {
        let (mut step_sum, mut step_n) = (0.0, 0usize);
        for &j in foot_joints {
            let (a, b) = (traj.at(t, j), traj.at(t + 1, j));
            let h = a[up] - cfg.floor_mm;
            if h < cfg.h_thresh_mm {
                let v = (b[u] - a[u]).abs() + (b[w] - a[w]).abs();
                step_sum += v * foot_skating_weight(h, cfg.h_thresh_mm);
                step_n += 1;
            }
        }
        total += step_sum;
        count += step_n;
        per_step.push(if step_n == 0 {
            0.0
        } else {
            step_sum / step_n as f64
        });
    }
    Ok((per_step, total, count))
}

/// Mean height-weighted planar foot displacement over steps where the foot is
/// below `h_thresh_mm`. Zero when no step qualifies.
pub fn foot_skating(
    traj: &JointTrajectory,
    foot_joints: &[usize],
    cfg: &FootSkatingConfig,
) -> Result<f64> {
    let (_, total, count) = foot_skating_steps(traj, foot_joints, cfg)?;
    Ok(if count == 0 {
        0.0
    } else {
        total / count as f64
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Foot joint indices; derived from joint names when `None`.
    pub foot_joints: Option<Vec<usize>>,
    pub foot_skating: FootSkatingConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerFrame {
    pub mpjpe_mm: Vec<f64>,
    pub o_head: Vec<f64>,
    pub t_head_mm: Vec<f64>,
    pub accel_mm_s2: Vec<f64>,
    pub fs_mm: Vec<f64>,
}

/// Number of samples averaged by each metric, used to pool sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleCounts {
    pub joint_frames: usize,
    pub head_frames: usize,
    pub accel_samples: usize,
    pub fs_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub o_head: f64,
    pub t_head_mm: f64,
    pub mpjpe_mm: f64,
    pub accel_mm_s2: f64,
    pub fs_mm: f64,
    pub counts: SampleCounts,
    pub per_frame: PerFrame,
}

impl MetricReport {
    /// Column order of the results table.
    pub const HEADERS: [&'static str; 5] = ["O_head", "T_head", "MPJPE", "Accel", "FS"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.o_head,
            self.t_head_mm,
            self.mpjpe_mm,
            self.accel_mm_s2,
            self.fs_mm,
        ]
    }

    /// `key = value` lines in table column order.
    pub fn to_text(&self) -> String {
        let units = ["", " mm", " mm", " mm/s^2", " mm"];
        Self::HEADERS
            .iter()
            .zip(self.values())
            .zip(units)
            .map(|((h, v), u)| format!("{h} = {v:.6}{u}\n"))
            .collect()
    }
}

/// All five metrics for one sequence. Foot skating is measured on the
/// predicted body.
pub fn evaluate_all(pred: &PoseSet, gt: &PoseSet, cfg: &EvalConfig) -> Result<MetricReport> {
    let mpjpe_frames = mpjpe_per_frame(&pred.body, &gt.body)?;
    let o_frames = head_orientation_errors(&pred.head, &gt.head)?;
    let t_frames = head_translation_errors(&pred.head, &gt.head)?;
    let accel_frames = accel_per_frame(&pred.body, &gt.body)?;
    let feet = match &cfg.foot_joints {
        Some(f) => f.clone(),
        None => gt.body.foot_joints_by_name(),
    };
    if feet.is_empty() {
        return Err(Error::Config(
            "no foot joints: pass them explicitly or name them in the pose file".into(),
        ));
    }
    let (fs_steps, fs_total, fs_count) = foot_skating_steps(&pred.body, &feet, &cfg.foot_skating)?;
    let joints = pred.body.joints;
    Ok(MetricReport {
        o_head: mean(&o_frames),
        t_head_mm: mean(&t_frames),
        mpjpe_mm: mpjpe(&pred.body, &gt.body)?,
        accel_mm_s2: mean(&accel_frames),
        fs_mm: if fs_count == 0 {
            0.0
        } else {
            fs_total / fs_count as f64
        },
        counts: SampleCounts {
            joint_frames: pred.body.frames * joints,
            head_frames: o_frames.len(),
            accel_samples: accel_frames.len() * joints,
            fs_samples: fs_count,
        },
        per_frame: PerFrame {
            mpjpe_mm: mpjpe_frames,
            o_head: o_frames,
            t_head_mm: t_frames,
            accel_mm_s2: accel_frames,
            fs_mm: fs_steps,
        },
    })
}

/// Pooled report over many sequences plus the per-sequence breakdown.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetReport {
    pub overall: MetricReport,
    pub per_sequence: Vec<(String, MetricReport)>,
}

/// Pools per-sequence reports as a mean over all frames of all sequences.
pub fn pool_reports(per_sequence: Vec<(String, MetricReport)>) -> DatasetReport {
    let mut counts = SampleCounts::default();
    let mut sums = [0.0f64; 5];
    for (_, r) in &per_sequence {
        let c = r.counts;
        let w = [
            c.head_frames,
            c.head_frames,
            c.joint_frames,
            c.accel_samples,
            c.fs_samples,
        ];
        for ((s, v), w) in sums.iter_mut().zip(r.values()).zip(w) {
            *s += v * w as f64;
        }
        counts.joint_frames += c.joint_frames;
        counts.head_frames += c.head_frames;
        counts.accel_samples += c.accel_samples;
        counts.fs_samples += c.fs_samples;
    }
    let div = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let overall = MetricReport {
        o_head: div(sums[0], counts.head_frames),
        t_head_mm: div(sums[1], counts.head_frames),
        mpjpe_mm: div(sums[2], counts.joint_frames),
        accel_mm_s2: div(sums[3], counts.accel_samples),
        fs_mm: div(sums[4], counts.fs_samples),
        counts,
        per_frame: PerFrame::default(),
    };
    DatasetReport {
        overall,
        per_sequence,
    }
}
