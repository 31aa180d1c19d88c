//! Deterministic data pipeline for event-based egocentric pose estimation.
//!
//! The crate covers the parts of the pipeline that do not involve learned
//! models:
//!
//! * [`event`]: the event cloud model and time-ordered event streams.
//! * [`voxel`]: conversion of event streams into `T×B×H×W` voxel grids.
//! * [`synth`]: frame-to-event synthesis with a log-intensity threshold model.
//! * [`mask`]: dynamic-object masks from projected triangle meshes.
//! * [`segmentation`]: mask application (background extraction), BCE and IoU.
//! * [`metrics`]: MPJPE, head orientation/translation error, Accel and foot skating.
//! * [`io`]: file formats, manifests and dataset statistics.
//!
//! Per-frame and per-pixel work runs on rayon when the `parallel` feature is
//! enabled (the default). Results are bit-identical to the sequential path.

pub mod error;
pub mod event;
pub mod io;
pub mod mask;
pub mod metrics;
mod par;
pub mod segmentation;
pub mod selftest;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
pub use event::{Event, EventStream, ValidationReport};
pub use mask::{BinaryMask, CameraIntrinsics, RigidTransform, TriangleMesh};
pub use metrics::{HeadPoseSequence, JointTrajectory, MetricReport, UpAxis};
pub use segmentation::SoftMask;
pub use synth::{FrameSequence, SynthConfig};
pub use voxel::{NormMode, VoxelConfig, VoxelGrid};

/// Nanoseconds per second.
pub const NS_PER_SEC: u64 = 1_000_000_000;
