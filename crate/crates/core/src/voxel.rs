//! Event voxelization.
//!
//! A stream is cut into frames at a fixed frame rate, each frame is split into
//! `B` temporal bins, and every event's polarity is shared between its two
//! nearest bins with linear weights. Frames are stored `[T][B][H][W]`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};
use crate::{par, NS_PER_SEC};

/// Scope of min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// One min/max per frame over all `B×H×W` cells.
    #[default]
    Frame,
    /// One min/max per bin image (`H×W`).
    Bin,
    /// One min/max over the whole grid.
    Grid,
}

impl NormMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::Frame => "frame",
            NormMode::Bin => "bin",
            NormMode::Grid => "grid",
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(NormMode::Frame),
            "bin" => Ok(NormMode::Bin),
            "grid" => Ok(NormMode::Grid),
            other => Err(Error::Config(format!(
                "unknown normalization mode `{other}` (expected frame, bin or grid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelConfig {
    pub fps: f64,
    pub bins: usize,
    /// `None` keeps raw accumulated polarity.
    pub norm: Option<NormMode>,
}

impl VoxelConfig {
    pub const DEFAULT_FPS: f64 = 30.0;
    pub const DEFAULT_BINS: usize = 3;

    pub fn raw(fps: f64, bins: usize) -> Self {
        Self {
            fps,
            bins,
            norm: None,
        }
    }
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            fps: Self::DEFAULT_FPS,
            bins: Self::DEFAULT_BINS,
            norm: Some(NormMode::Frame),
        }
    }
}

/// Dense `T×B×H×W` grid of binned polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    frames: usize,
    bins: usize,
    height: usize,
    width: usize,
    fps: f64,
    norm: Option<NormMode>,
    mask_applied: bool,
    values: Vec<f32>,
}

impl VoxelGrid {
    /// All-zero raw grid.
    pub fn zeros(frames: usize, bins: usize, height: usize, width: usize, fps: f64) -> Self {
        Self {
            frames,
            bins,
            height,
            width,
            fps,
            norm: None,
            mask_applied: false,
            values: vec![0.0; frames * bins * height * width],
        }
    }

    /// Builds a grid, checking shape, `bins >= 1`, `fps > 0` and the `[0, 1]`
    /// range of normalized values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        frames: usize,
        bins: usize,
        height: usize,
        width: usize,
        fps: f64,
        norm: Option<NormMode>,
        mask_applied: bool,
        values: Vec<f32>,
    ) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Invalid("bins must be at least 1".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
        }
        let expected = frames
            .checked_mul(bins)
            .and_then(|n| n.checked_mul(height))
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Error::Shape("grid dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{} values for a {frames}×{bins}×{height}×{width} grid",
                values.len()
            )));
        }
        if norm.is_some() && values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid(
                "normalized grid has values outside [0, 1]".into(),
            ));
        }
        Ok(Self {
            frames,
            bins,
            height,
            width,
            fps,
            norm,
            mask_applied,
            values,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn normalization(&self) -> Option<NormMode> {
        self.norm
    }

    pub fn is_normalized(&self) -> bool {
        self.norm.is_some()
    }

    pub fn mask_applied(&self) -> bool {
        self.mask_applied
    }

    pub(crate) fn set_mask_applied(&mut self, applied: bool) {
        self.mask_applied = applied;
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Cells per frame, `B·H·W`.
    pub fn frame_len(&self) -> usize {
        self.bins * self.height * self.width
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let n = self.frame_len();
        &self.values[k * n..(k + 1) * n]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn get(&self, t: usize, b: usize, y: usize, x: usize) -> f32 {
        self.values[((t * self.bins + b) * self.height + y) * self.width + x]
    }

    /// Normalizes a raw grid in place. Normalizing twice is an error, since the
    /// raw values are gone after the first pass.
    pub fn normalize(&mut self, mode: NormMode) -> Result<()> {
        if let Some(existing) = self.norm {
            return Err(Error::Invalid(format!(
                "grid is already normalized ({existing})"
            )));
        }
        let frame_len = self.frame_len();
        let plane = self.height * self.width;
        match mode {
            NormMode::Frame => {
                par::for_each_chunk_mut(&mut self.values, frame_len, |_, f| normalize_in_place(f))
            }
            NormMode::Bin => {
                par::for_each_chunk_mut(&mut self.values, plane, |_, f| normalize_in_place(f))
            }
            NormMode::Grid => normalize_in_place(&mut self.values),
        }
        self.norm = Some(mode);
        Ok(())
    }
}

/// Time window of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameWindow {
    pub index: usize,
    pub t_start: u64,
    pub t_end: u64,
}

/// Frame period `floor(1e9 / fps)` in nanoseconds.
pub fn frame_period_ns(fps: f64) -> Result<u64> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
    }
    let period = (NS_PER_SEC as f64 / fps).floor();
    if period < 1.0 {
        return Err(Error::Invalid(format!(
            "fps {fps} gives a frame period below 1 ns"
        )));
    }
    Ok(period as u64)
}

/// `ceil(duration · fps / 1e9)`, exact for integral frame rates.
pub fn frame_count(duration_ns: u64, fps: f64) -> usize {
    if duration_ns == 0 {
        return 0;
    }
    if fps.fract() == 0.0 && fps <= u64::MAX as f64 {
        let num = duration_ns as u128 * fps as u128;
        return num.div_ceil(NS_PER_SEC as u128) as usize;
    }
    let x = duration_ns as f64 * fps / NS_PER_SEC as f64;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

/// Frame windows covering `[t_begin, t_end)`. Frame `k` starts at
/// `t_begin + k·Δ`; the last frame ends at `t_end`.
pub fn frame_windows(t_begin: u64, t_end: u64, fps: f64) -> Result<Vec<FrameWindow>> {
    let period = frame_period_ns(fps)?;
    let n = frame_count(t_end.saturating_sub(t_begin), fps);
    Ok((0..n)
        .map(|k| FrameWindow {
            index: k,
            t_start: t_begin + k as u64 * period,
            t_end: if k + 1 == n {
                t_end
            } else {
                t_begin + (k as u64 + 1) * period
            },
        })
        .collect())
}

/// Splits a sorted stream into per-frame slices.
pub fn segment_stream(stream: &EventStream, fps: f64) -> Result<Vec<(usize, EventStream)>> {
    frame_windows(stream.t_begin(), stream.t_end(), fps)?
        .into_iter()
        .map(|w| Ok((w.index, stream.slice_time(w.t_start, w.t_end)?)))
        .collect()
}

/// Lower bin index and the weights given to it and to the next bin.
///
/// The bin coordinate is `(t − t_start)/(t_end − t_start)·(B − 1)`; the two
/// weights are non-negative and sum to one.
#[inline]
pub fn bin_weights(t: u64, t_start: u64, t_end: u64, bins: usize) -> (usize, f64, f64) {
    if bins <= 1 || t_end <= t_start {
        return (0, 1.0, 0.0);
    }
    let last = bins - 1;
    let coord = (t - t_start) as f64 / (t_end - t_start) as f64 * last as f64;
    let lower = coord.floor();
    let lo = lower as usize;
    if lo >= last {
        return (last, 1.0, 0.0);
    }
    let frac = coord - lower;
    (lo, 1.0 - frac, frac)
}

/// Accumulates one frame of events into a raw `B×H×W` buffer.
pub fn accumulate_frame(
    events: &[Event],
    t_start: u64,
    t_end: u64,
    bins: usize,
    height: usize,
    width: usize,
) -> Result<Vec<f32>> {
    let mut out = vec![0.0f32; bins * height * width];
    accumulate_into(events, 0, t_start, t_end, bins, height, width, &mut out)?;
    Ok(out)
}

// `index_offset` is the position of `events[0]` in the parent stream, used
// only for error reporting.
#[allow(clippy::too_many_arguments)]
fn accumulate_into(
    events: &[Event],
    index_offset: usize,
    t_start: u64,
    t_end: u64,
    bins: usize,
    height: usize,
    width: usize,
    out: &mut [f32],
) -> Result<()> {
    if bins == 0 {
        return Err(Error::Invalid("bins must be at least 1".into()));
    }
    debug_assert_eq!(out.len(), bins * height * width);
    let plane = height * width;
    // f64 accumulator keeps polarity sums exact to well below f32 resolution.
    let mut acc = vec![0.0f64; out.len()];
    for (i, e) in events.iter().enumerate() {
        if e.t < t_start || e.t >= t_end {
            return Err(Error::OutOfWindow {
                index: index_offset + i,
                t: e.t,
                t_start,
                t_end,
            });
        }
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            return Err(Error::Invalid(format!(
                "event {} at ({x}, {y}) outside {width}×{height}",
                index_offset + i
            )));
        }
        let p = e.p as f64;
        let (lo, w_lo, w_hi) = bin_weights(e.t, t_start, t_end, bins);
        let cell = lo * plane + y * width + x;
        acc[cell] += p * w_lo;
        if w_hi != 0.0 {
            acc[cell + plane] += p * w_hi;
        }
    }
    for (o, a) in out.iter_mut().zip(&acc) {
        *o = *a as f32;
    }
    Ok(())
}

/// Min-max normalization of one frame into `[0, 1]`. A constant frame maps
/// to zeros.
pub fn normalize_frame(values: &[f32]) -> Vec<f32> {
    let mut out = values.to_vec();
    normalize_in_place(&mut out);
    out
}

pub(crate) fn normalize_in_place(values: &mut [f32]) {
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    for v in values.iter_mut() {
        *v = (((*v as f64) - lo) / span).clamp(0.0, 1.0) as f32;
    }
}

/// Voxelizes a stream: segment, accumulate, then normalize if configured.
pub fn voxelize(stream: &EventStream, cfg: &VoxelConfig) -> Result<VoxelGrid> {
    let mut grid = voxelize_raw(stream, cfg.fps, cfg.bins)?;
    if let Some(mode) = cfg.norm {
        grid.normalize(mode)?;
    }
    Ok(grid)
}

/// Voxelizes without normalization. Frames are accumulated in parallel;
/// within a frame events are added in stream order.
pub fn voxelize_raw(stream: &EventStream, fps: f64, bins: usize) -> Result<VoxelGrid> {
    if bins == 0 {
        return Err(Error::Invalid("bins must be at least 1".into()));
    }
    let report = stream.validate();
    if !report.is_ok() {
        return Err(Error::Invalid(format!("event stream: {report}")));
    }
    let windows = frame_windows(stream.t_begin(), stream.t_end(), fps)?;
    let (height, width) = (stream.height() as usize, stream.width() as usize);
    let mut grid = VoxelGrid::zeros(windows.len(), bins, height, width, fps);
    let frame_len = grid.frame_len();
    let events = stream.events();
    let ranges: Vec<_> = windows
        .iter()
        .map(|w| stream.index_range(w.t_start, w.t_end))
        .collect();
    let failures = std::sync::Mutex::new(None);
    par::for_each_chunk_mut(grid.values_mut(), frame_len, |k, out| {
        let w = windows[k];
        let r = ranges[k].clone();
        if let Err(e) = accumulate_into(
            &events[r.clone()],
            r.start,
            w.t_start,
            w.t_end,
            bins,
            height,
            width,
            out,
        ) {
            failures.lock().unwrap().get_or_insert(e);
        }
    });
    if let Some(e) = failures.into_inner().unwrap() {
        return Err(e);
    }
    Ok(grid)
}
