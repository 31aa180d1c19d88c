//! `egoevent` command-line front end.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use egoevent::io::{self, manifest::consistency_warnings, PoseRecord};
use egoevent::mask::{make_dynamic_masks, CameraIntrinsics, RigidTransform, TriangleMesh};
use egoevent::metrics::{evaluate_all, pool_reports, EvalConfig};
use egoevent::segmentation::{self, BCE_CLAMP_EPS};
use egoevent::selftest;
use egoevent::synth::{generate_events, SynthConfig};
use egoevent::voxel::voxelize_raw;
use egoevent::EventStream;

use crate::config::{PipelineConfig, PipelineFlags};

#[derive(Debug, Parser)]
#[command(
    name = "egoevent",
    version,
    about = "Event voxelization, dynamic masks and egocentric pose metrics"
)]
struct Cli {
    #[command(flatten)]
    flags: PipelineFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoseConvention {
    /// Pose file holds the camera pose in world coordinates.
    CameraToWorld,
    /// Pose file holds the world-to-camera extrinsics.
    WorldToCamera,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize events from a directory of PGM/PPM frames
    Synth {
        /// Directory of frames, sorted by file name
        #[arg(long)]
        frames: PathBuf,
        /// Timestamp list, one nanosecond value per line [default: <frames>/timestamps.txt]
        #[arg(long)]
        timestamps: Option<PathBuf>,
        /// Output EVT1 file
        #[arg(long, short)]
        out: PathBuf,
        /// Constant added before the logarithm
        #[arg(long, default_value_t = 1e-3)]
        eps_log: f64,
        /// Minimum gap between events of one pixel, ns
        #[arg(long, default_value_t = 0)]
        refractory_ns: u64,
        /// Relative per-pixel threshold jitter (0 disables)
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Seed for threshold jitter
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert an EVT1 event file into a voxel grid file
    Voxelize {
        #[arg(long)]
        events: PathBuf,
        /// Output payload path; the header goes to <out>.hdr
        #[arg(long, short)]
        out: PathBuf,
        /// Window start in ns [default: 0]
        #[arg(long)]
        t_begin: Option<u64>,
        /// Window end in ns (exclusive) [default: last event + 1]
        #[arg(long)]
        t_end: Option<u64>,
        /// Directory of per-frame PBM masks applied before normalization
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Project posed meshes into the camera and write one PBM mask per frame
    Maskgen {
        /// OBJ mesh file, or a directory with one OBJ per frame
        #[arg(long)]
        mesh: PathBuf,
        /// Pose file with a `head` section giving the camera pose per frame
        #[arg(long)]
        poses: PathBuf,
        /// Intrinsics as fx,fy,cx,cy,width,height
        #[arg(long)]
        intrinsics: String,
        /// Output directory for mask_NNNNNN.pbm files
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PoseConvention::CameraToWorld)]
        pose_convention: PoseConvention,
    },
    /// Apply dynamic masks to a voxel grid; optionally score predicted masks
    Segment {
        #[arg(long)]
        voxels: PathBuf,
        /// Directory of ground-truth PBM masks, one per frame
        #[arg(long)]
        masks: PathBuf,
        /// Output payload path for the masked grid
        #[arg(long, short)]
        out: PathBuf,
        /// Normalize a raw input grid after masking, using --norm
        #[arg(long)]
        normalize_after: bool,
        /// Directory of predicted soft masks (PGM) to score against --masks
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Binarization threshold for IoU
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Write the segmentation report as JSON here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute O_head, T_head, MPJPE, Accel and FS for predicted vs ground-truth poses
    Evaluate {
        /// Predicted pose file, or directory of pose files
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth pose file, or directory with matching file names
        #[arg(long)]
        gt: PathBuf,
        /// Foot joint indices, comma separated [default: joints named toe/ankle/foot]
        #[arg(long, value_delimiter = ',')]
        foot_joints: Option<Vec<usize>>,
        /// Write the structured (JSON) report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset statistics from a directory of sequence manifests
    Stats {
        #[arg(long)]
        manifests: PathBuf,
        /// Write the statistics as JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the analytic fixtures and print pass/fail per check
    Selftest {
        /// Also measure single-threaded voxelization throughput
        #[arg(long)]
        bench: bool,
        /// Events used by the throughput probe
        #[arg(long, default_value_t = 10_000_000)]
        bench_events: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = PipelineConfig::resolve(&cli.flags)?;
    eprintln!("{cfg}");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building worker pool")?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &PipelineConfig) -> Result<ExitCode> {
    match command {
        Command::Synth {
            frames,
            timestamps,
            out,
            eps_log,
            refractory_ns,
            jitter,
            seed,
        } => {
            let seq = io::read_frame_dir(&frames, timestamps.as_deref())?;
            let synth = SynthConfig {
                c_pos: cfg.c_pos,
                c_neg: cfg.c_neg,
                eps_log,
                refractory_ns,
                threshold_jitter: jitter,
                seed,
            };
            let stream = generate_events(&seq, &synth)?;
            io::write_events(&out, &stream)?;
            println!("events = {}", stream.len());
        }
        Command::Voxelize {
            events,
            out,
            t_begin,
            t_end,
            masks,
        } => {
            let stream = io::read_events(&events)?;
            let stream = rewindow(stream, t_begin, t_end)?;
            let mut grid = voxelize_raw(&stream, cfg.fps, cfg.bins)?;
            if let Some(dir) = masks {
                let masks = io::read_mask_dir(&dir)?;
                grid = segmentation::apply_masks(&grid, &masks)?;
            }
            if let Some(mode) = cfg.norm.0 {
                grid.normalize(mode)?;
            }
            io::write_voxel_grid(&out, &grid)?;
            println!(
                "frames = {}\nbins = {}\nheight = {}\nwidth = {}\nevents = {}",
                grid.frames(),
                grid.bins(),
                grid.height(),
                grid.width(),
                stream.len()
            );
        }
        Command::Maskgen {
            mesh,
            poses,
            intrinsics,
            out,
            pose_convention,
        } => {
            let k = parse_intrinsics(&intrinsics)?;
            let meshes = load_meshes(&mesh)?;
            let head = io::read_poses(&poses)?
                .head
                .context("pose file has no `head` section")?;
            let extrinsics: Vec<RigidTransform> = head
                .rotations()
                .iter()
                .zip(head.translations())
                .map(|(r, t)| {
                    let xf = RigidTransform {
                        rotation: *r,
                        translation: t / 1000.0,
                    };
                    match pose_convention {
                        PoseConvention::CameraToWorld => xf.inverse(),
                        PoseConvention::WorldToCamera => xf,
                    }
                })
                .collect();
            let n = match (meshes.len(), extrinsics.len()) {
                (m, p) if m == p => m,
                (1, p) => p,
                (m, 1) => m,
                (m, p) => bail!("{m} meshes but {p} poses"),
            };
            let frames: Vec<(TriangleMesh, RigidTransform)> = (0..n)
                .map(|i| {
                    (
                        meshes[i.min(meshes.len() - 1)].clone(),
                        extrinsics[i.min(extrinsics.len() - 1)],
                    )
                })
                .collect();
            let masks = make_dynamic_masks(&frames, &k, cfg.dilate)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, m) in masks.iter().enumerate() {
                io::write_mask(&out.join(format!("mask_{i:06}.pbm")), m)?;
            }
            println!("masks = {}", masks.len());
        }
        Command::Segment {
            voxels,
            masks,
            out,
            normalize_after,
            pred,
            tau,
            report,
        } => {
            let grid = io::read_voxel_grid(&voxels)?;
            let gt = io::read_mask_dir(&masks)?;
            let mut masked = segmentation::apply_masks(&grid, &gt)?;
            if normalize_after && !masked.is_normalized() {
                if let Some(mode) = cfg.norm.0 {
                    masked.normalize(mode)?;
                }
            }
            io::write_voxel_grid(&out, &masked)?;
            println!("frames = {}", masked.frames());
            if let Some(dir) = pred {
                let preds = io::read_soft_mask_dir(&dir)?;
                let r = segmentation::evaluate_segmentation(&preds, &gt, tau, BCE_CLAMP_EPS)?;
                println!("BCE = {:.6}\nIoU = {:.6}", r.bce, r.iou);
                if let Some(path) = report {
                    write_json(&path, &r)?;
                }
            } else if report.is_some() {
                bail!("--report needs --pred");
            }
        }
        Command::Evaluate {
            pred,
            gt,
            foot_joints,
            out,
        } => {
            let eval = EvalConfig {
                foot_joints,
                foot_skating: cfg.foot_skating(),
            };
            let pairs = pose_pairs(&pred, &gt)?;
            let mut per_sequence = Vec::with_capacity(pairs.len());
            for (name, p, g) in &pairs {
                let p = load_pose_set(p, cfg)?;
                let g = load_pose_set(g, cfg)?;
                let r =
                    evaluate_all(&p, &g, &eval).with_context(|| format!("evaluating {name}"))?;
                per_sequence.push((name.clone(), r));
            }
            if per_sequence.len() == 1 {
                let (_, r) = per_sequence.pop().expect("one report");
                print!("{}", r.to_text());
                if let Some(path) = out {
                    write_json(&path, &r)?;
                }
            } else {
                let pooled = pool_reports(per_sequence);
                print!("{}", pooled.overall.to_text());
                if let Some(path) = out {
                    write_json(&path, &pooled)?;
                }
            }
        }
        Command::Stats { manifests, out } => {
            let all = io::read_manifest_dir(&manifests)?;
            let stats = io::dataset_stats(&all)?;
            for w in consistency_warnings(&all) {
                eprintln!("warning: {w}");
            }
            print!("{stats}");
            if let Some(path) = out {
                write_json(&path, &stats)?;
            }
        }
        Command::Selftest {
            bench,
            bench_events,
        } => {
            let results = selftest::run_fixtures();
            let mut failed = 0;
            for r in &results {
                println!(
                    "{} {} ({})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                failed += usize::from(!r.passed);
            }
            if bench {
                let single = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
                let b = single.install(|| selftest::bench_voxelize(bench_events, 3));
                let ok = b.events_per_sec >= 5e6;
                println!(
                    "{} throughput: {:.3e} events/s single-threaded (640×480, B = 3, target 5e6)",
                    if ok { "PASS" } else { "FAIL" },
                    b.events_per_sec
                );
                failed += usize::from(!ok);
            }
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn rewindow(stream: EventStream, t_begin: Option<u64>, t_end: Option<u64>) -> Result<EventStream> {
    if t_begin.is_none() && t_end.is_none() {
        return Ok(stream);
    }
    let begin = t_begin.unwrap_or(stream.t_begin());
    let end = t_end.unwrap_or(stream.t_end());
    let (w, h) = (stream.width(), stream.height());
    EventStream::new(w, h, begin, end, stream.into_events())
        .context("events fall outside the requested window")
}

fn parse_intrinsics(s: &str) -> Result<CameraIntrinsics> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad intrinsics `{s}`"))?;
    let [fx, fy, cx, cy, w, h] = parts[..] else {
        bail!("intrinsics need fx,fy,cx,cy,width,height");
    };
    if w.fract() != 0.0 || h.fract() != 0.0 || w < 0.0 || h < 0.0 {
        bail!("image size must be whole pixels");
    }
    Ok(CameraIntrinsics::new(
        fx, fy, cx, cy, w as usize, h as usize,
    )?)
}

fn load_meshes(path: &Path) -> Result<Vec<TriangleMesh>> {
    let meshes = if path.is_dir() {
        io::list_files(path, &["obj"])?
            .iter()
            .map(|p| io::read_mesh(p))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![io::read_mesh(path)?]
    };
    if meshes.is_empty() {
        bail!("no OBJ meshes in {}", path.display());
    }
    Ok(meshes)
}

fn pose_pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if !pred.is_dir() {
        let name = pred
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        return Ok(vec![(name, pred.to_path_buf(), gt.to_path_buf())]);
    }
    if !gt.is_dir() {
        bail!("--pred is a directory, so --gt must be one too");
    }
    let files = io::list_files(pred, &["json"])?;
    if files.is_empty() {
        bail!("no pose files in {}", pred.display());
    }
    files
        .into_iter()
        .map(|p| {
            let file = p.file_name().expect("listed file").to_owned();
            let g = gt.join(&file);
            if !g.is_file() {
                bail!(
                    "no ground truth for {} in {}",
                    file.to_string_lossy(),
                    gt.display()
                );
            }
            let name = p
                .file_stem()
                .expect("listed file")
                .to_string_lossy()
                .into_owned();
            Ok((name, p, g))
        })
        .collect()
}

fn load_pose_set(path: &Path, cfg: &PipelineConfig) -> Result<egoevent::metrics::PoseSet> {
    let mut rec: PoseRecord = io::read_poses(path)?;
    if let Some(up) = cfg.up {
        rec.body = rec.body.map(|b| b.with_up_axis(up));
    }
    rec.into_pose_set()
        .with_context(|| path.display().to_string())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    io::write_atomic(path, &bytes)?;
    Ok(())
}
