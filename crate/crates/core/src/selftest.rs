//! Analytic fixtures with closed-form answers, plus a voxelization
//! throughput probe. Used by the `selftest` CLI subcommand.

use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event::{Event, EventStream};
use crate::io::manifest::{dataset_stats, SequenceManifest, Split};
use crate::mask::BinaryMask;
use crate::mask::{make_dynamic_mask, CameraIntrinsics, RigidTransform, TriangleMesh};
use crate::metrics::{
    foot_skating, head_orientation_error, FootSkatingConfig, HeadPoseSequence, JointTrajectory,
    UpAxis,
};
use crate::segmentation::{bce_loss, SoftMask, BCE_CLAMP_EPS};
use crate::synth::{generate_events, FrameSequence, SynthConfig};
use crate::voxel::{voxelize_raw, VoxelConfig};
use crate::NS_PER_SEC;

#[derive(Debug, Clone)]
pub struct FixtureResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> FixtureResult {
    FixtureResult {
        name,
        passed,
        detail,
    }
}

fn rot_z(deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians()).matrix()
}

fn orientation(deg: f64) -> f64 {
    let one = |r| HeadPoseSequence::new(vec![r], vec![Vector3::zeros()]).expect("valid rotation");
    head_orientation_error(&one(rot_z(deg)), &one(Matrix3::identity())).unwrap_or(f64::NAN)
}

/// Runs every fixture; never panics on a failing check.
pub fn run_fixtures() -> Vec<FixtureResult> {
    let mut out = Vec::new();

    let (q, h) = (orientation(90.0), orientation(180.0));
    out.push(check(
        "orientation error: 90° → 2, 180° → √8",
        orientation(0.0) == 0.0 && (q - 2.0).abs() <= 1e-9 && (h - 8f64.sqrt()).abs() <= 1e-9,
        format!("0° = {}, 90° = {q:.12}, 180° = {h:.12}", orientation(0.0)),
    ));

    let mut gt = BinaryMask::empty(4, 4);
    gt.set(1, 2, true);
    let half = bce_loss(
        &SoftMask::filled(4, 4, 0.5).expect("valid"),
        &gt,
        BCE_CLAMP_EPS,
    )
    .unwrap_or(f64::NAN);
    let perfect = bce_loss(&SoftMask::from(&gt), &gt, BCE_CLAMP_EPS).unwrap_or(f64::NAN);
    out.push(check(
        "BCE: uniform 0.5 → ln 2, perfect → ≤ 2e-7",
        (half - std::f64::consts::LN_2).abs() <= 1e-6 && (0.0..=2e-7).contains(&perfect),
        format!("uniform = {half:.9}, perfect = {perfect:.3e}"),
    ));

    let cfg = SynthConfig::default();
    let (i0, eps) = (0.2f64, cfg.eps_log);
    let i1 = (i0 + eps) * (2.5 * cfg.c_pos).exp() - eps;
    let ramp = FrameSequence::new(
        1,
        1,
        vec![vec![i0 as f32], vec![i1 as f32]],
        vec![0, 1_000_000],
    )
    .and_then(|s| generate_events(&s, &cfg));
    let (ok, detail) = match ramp {
        Ok(s) => {
            let t: Vec<(u64, i8)> = s.events().iter().map(|e| (e.t, e.p)).collect();
            let ok = t.len() == 2
                && t[0].0.abs_diff(400_000) <= 1
                && t[1].0.abs_diff(800_000) <= 1
                && t.iter().all(|e| e.1 == 1);
            (ok, format!("{t:?}"))
        }
        Err(e) => (false, e.to_string()),
    };
    out.push(check(
        "synthesis: 2.5-threshold ramp → events at 0.4Δt, 0.8Δt",
        ok,
        detail,
    ));

    let k = CameraIntrinsics::new(100.0, 100.0, 320.0, 240.0, 640, 480).expect("valid intrinsics");
    let quad = TriangleMesh::new(
        vec![
            Vector3::new(-0.5, -0.5, 1.0),
            Vector3::new(0.5, -0.5, 1.0),
            Vector3::new(0.5, 0.5, 1.0),
            Vector3::new(-0.5, 0.5, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("valid mesh");
    let count = make_dynamic_mask(&quad, &RigidTransform::identity(), &k, 0).map(|m| m.count());
    out.push(check(
        "mask: unit quad at 1 m → 100×100 px rectangle",
        matches!(count, Ok(10_000)),
        format!("{count:?} pixels"),
    ));

    let foot = JointTrajectory::new(
        2,
        1,
        vec![Vector3::zeros(), Vector3::new(3.0, 4.0, 0.0)],
        30.0,
        UpAxis::Z,
        None,
    )
    .and_then(|t| foot_skating(&t, &[0], &FootSkatingConfig::default()));
    out.push(check(
        "foot skating: floor contact, Δ = (3, 4) → 7 mm",
        matches!(foot, Ok(v) if v == 7.0),
        format!("{foot:?}"),
    ));

    let manifests: Vec<SequenceManifest> = (0..1267)
        .map(|i| SequenceManifest {
            sequence_id: format!("seq{i:04}"),
            split: if i < 966 { Split::Train } else { Split::Test },
            frame_count: 150,
            fps: 30.0,
            events: format!("seq{i:04}/events.evt"),
            masks: format!("seq{i:04}/masks"),
            poses: format!("seq{i:04}/poses.json"),
            meshes: format!("seq{i:04}/meshes"),
        })
        .collect();
    let stats = dataset_stats(&manifests);
    out.push(check(
        "dataset: 966 + 301 sequences of 150 frames → 1267 / 190050",
        matches!(&stats, Ok(s) if s.n_sequences == 1267 && s.n_frames == 190_050 && s.n_train == 966 && s.n_test == 301),
        format!("{stats:?}"),
    ));

    let stream = random_stream(
        &mut ChaCha8Rng::seed_from_u64(11),
        32,
        24,
        20_000,
        NS_PER_SEC / 5,
    );
    let cons =
        voxelize_raw(&stream, VoxelConfig::DEFAULT_FPS, VoxelConfig::DEFAULT_BINS).map(|g| {
            let frames = crate::voxel::frame_windows(stream.t_begin(), stream.t_end(), g.fps())
                .unwrap_or_default();
            frames
                .iter()
                .map(|w| {
                    let cells: f64 = g.frame(w.index).iter().map(|&v| v as f64).sum();
                    let pol: f64 = stream.events()[stream.index_range(w.t_start, w.t_end)]
                        .iter()
                        .map(|e| e.p as f64)
                        .sum();
                    (cells - pol).abs()
                })
                .fold(0.0, f64::max)
        });
    out.push(check(
        "voxelizer: per-frame polarity conservation",
        matches!(cons, Ok(d) if d <= 1e-6 * stream.len() as f64),
        format!("max |Σcells − Σp| = {cons:?}"),
    ));

    out
}

/// Sorted random events over `[0, duration_ns)`.
pub fn random_stream(
    rng: &mut impl Rng,
    width: u16,
    height: u16,
    n: usize,
    duration_ns: u64,
) -> EventStream {
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            Event::new(
                rng.random_range(0..width),
                rng.random_range(0..height),
                rng.random_range(0..duration_ns),
                if rng.random_bool(0.5) { 1 } else { -1 },
            )
        })
        .collect();
    events.sort_by_key(|e| e.t);
    EventStream::new_unchecked(width, height, 0, duration_ns, events)
}

#[derive(Debug, Clone, Copy)]
pub struct BenchResult {
    pub events: usize,
    pub seconds: f64,
    pub events_per_sec: f64,
}

/// Raw voxelization throughput on a 640×480 sensor with 3 bins at 30 fps,
/// best of `repeats` runs on the current thread pool.
pub fn bench_voxelize(n_events: usize, repeats: usize) -> BenchResult {
    let stream = random_stream(
        &mut ChaCha8Rng::seed_from_u64(5),
        640,
        480,
        n_events,
        NS_PER_SEC,
    );
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let grid = voxelize_raw(&stream, 30.0, 3).expect("valid stream");
        let dt = start.elapsed().as_secs_f64();
        std::hint::black_box(grid);
        best = best.min(dt);
    }
    BenchResult {
        events: n_events,
        seconds: best,
        events_per_sec: n_events as f64 / best,
    }
}
