//! Frame-to-event synthesis.
//!
//! Deterministic log-intensity threshold model: each pixel keeps a reference
//! log level, log intensity is interpolated linearly between frames, and an
//! event fires every time the interpolated level moves one contrast threshold
//! away from the reference. The reference then moves by exactly that
//! threshold, so a large change emits several events.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};
use crate::par;

/// Grayscale intensity frames in `[0, 1]` with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    width: u16,
    height: u16,
    frames: Vec<Vec<f32>>,
    timestamps: Vec<u64>,
}

impl FrameSequence {
    pub fn new(
        width: u16,
        height: u16,
        frames: Vec<Vec<f32>>,
        timestamps: Vec<u64>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Invalid("frame sequence is empty".into()));
        }
        if frames.len() != timestamps.len() {
            return Err(Error::Shape(format!(
                "{} frames but {} timestamps",
                frames.len(),
                timestamps.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!(
                "timestamps not strictly increasing at frame {}",
                i + 1
            )));
        }
        let n = width as usize * height as usize;
        for (k, f) in frames.iter().enumerate() {
            if f.len() != n {
                return Err(Error::Shape(format!(
                    "frame {k} has {} pixels, expected {width}×{height}",
                    f.len()
                )));
            }
            if let Some(i) = f.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invalid(format!(
                    "frame {k} pixel {i} intensity {} outside [0, 1]",
                    f[i]
                )));
            }
        }
        Ok(Self {
            width,
            height,
            frames,
            timestamps,
        })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn frames(&self) -> &[Vec<f32>] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Positive contrast threshold in log units.
    pub c_pos: f64,
    /// Negative contrast threshold in log units.
    pub c_neg: f64,
    /// Added to intensity before the logarithm.
    pub eps_log: f64,
    /// Minimum gap between two emitted events of one pixel.
    pub refractory_ns: u64,
    /// Relative standard deviation of per-pixel threshold jitter. Zero
    /// disables jitter.
    pub threshold_jitter: f64,
    /// Seed for the jitter generator.
    pub seed: u64,
}

impl SynthConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.2;

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.c_pos) || !positive(self.c_neg) {
            return Err(Error::Config(format!(
                "contrast thresholds must be positive (c_pos = {}, c_neg = {})",
                self.c_pos, self.c_neg
            )));
        }
        if !positive(self.eps_log) {
            return Err(Error::Config(format!(
                "eps_log must be positive, got {}",
                self.eps_log
            )));
        }
        if !(self.threshold_jitter >= 0.0 && self.threshold_jitter.is_finite()) {
            return Err(Error::Config(format!(
                "threshold jitter must be non-negative, got {}",
                self.threshold_jitter
            )));
        }
        Ok(())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c_pos: Self::DEFAULT_THRESHOLD,
            c_neg: Self::DEFAULT_THRESHOLD,
            eps_log: 1e-3,
            refractory_ns: 0,
            threshold_jitter: 0.0,
            seed: 0,
        }
    }
}

/// `ln(I + eps_log)` per pixel.
pub fn log_intensity(frame: &[f32], eps_log: f64) -> Vec<f64> {
    frame.iter().map(|&i| (i as f64 + eps_log).ln()).collect()
}

/// Synthesizes events for a frame sequence. The output window is
/// `[t_first, t_last + 1)`, sorted by time with ties in row-major pixel order.
pub fn generate_events(seq: &FrameSequence, cfg: &SynthConfig) -> Result<EventStream> {
    cfg.validate()?;
    let logs: Vec<Vec<f64>> = seq
        .frames
        .iter()
        .map(|f| log_intensity(f, cfg.eps_log))
        .collect();
    generate_events_from_log(seq.width, seq.height, &logs, &seq.timestamps, cfg)
}

/// Same as [`generate_events`] but starting from per-frame log intensity
/// maps. `cfg.eps_log` is not used.
pub fn generate_events_from_log(
    width: u16,
    height: u16,
    logs: &[Vec<f64>],
    timestamps: &[u64],
    cfg: &SynthConfig,
) -> Result<EventStream> {
    cfg.validate()?;
    let (w, h) = (width as usize, height as usize);
    if logs.is_empty() || logs.len() != timestamps.len() {
        return Err(Error::Shape(format!(
            "{} log frames but {} timestamps",
            logs.len(),
            timestamps.len()
        )));
    }
    if timestamps.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Invalid("timestamps not strictly increasing".into()));
    }
    if let Some(k) = logs.iter().position(|f| f.len() != w * h) {
        return Err(Error::Shape(format!("log frame {k} is not {w}×{h}")));
    }
    let t_begin = timestamps[0];
    let t_end = timestamps[timestamps.len() - 1] + 1;
    if logs.len() < 2 || w * h == 0 {
        return Ok(EventStream::empty(width, height, t_begin, t_end));
    }
    let thresholds = pixel_thresholds(cfg, w * h)?;

    let rows = par::map_range(h, |y| {
        let mut out = Vec::new();
        for x in 0..w {
            let idx = y * w + x;
            let (c_pos, c_neg) = thresholds
                .as_ref()
                .map_or((cfg.c_pos, cfg.c_neg), |t| t[idx]);
            simulate_pixel(
                |k| logs[k][idx],
                timestamps,
                c_pos,
                c_neg,
                cfg.refractory_ns,
                |t, p| out.push(Event::new(x as u16, y as u16, t, p)),
            );
        }
        out
    });
    let mut events: Vec<Event> = rows.into_iter().flatten().collect();
    par::sort_stable_by_key(&mut events, |e| e.t);
    Ok(EventStream::new_unchecked(
        width, height, t_begin, t_end, events,
    ))
}

fn pixel_thresholds(cfg: &SynthConfig, n: usize) -> Result<Option<Vec<(f64, f64)>>> {
    if cfg.threshold_jitter == 0.0 {
        return Ok(None);
    }
    let normal = Normal::new(0.0, cfg.threshold_jitter)
        .map_err(|e| Error::Config(format!("threshold jitter: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Jittered thresholds never drop below 1% of the nominal value.
    let mut draw = |c: f64| c * (1.0 + normal.sample(&mut rng)).max(0.01);
    Ok(Some(
        (0..n).map(|_| (draw(cfg.c_pos), draw(cfg.c_neg))).collect(),
    ))
}

/// Threshold-crossing simulation for one pixel. `log_at(k)` is the log
/// intensity at frame `k`; `emit(t, p)` receives events in time order.
fn simulate_pixel(
    log_at: impl Fn(usize) -> f64,
    timestamps: &[u64],
    c_pos: f64,
    c_neg: f64,
    refractory_ns: u64,
    mut emit: impl FnMut(u64, i8),
) {
    let mut reference = log_at(0);
    let mut last_emit: Option<u64> = None;
    let mut fire = |t: u64, p: i8| {
        // A suppressed crossing still moves the reference level.
        if last_emit.is_some_and(|last| t - last < refractory_ns) {
            return;
        }
        last_emit = Some(t);
        emit(t, p);
    };
    for k in 0..timestamps.len() - 1 {
        let (l0, l1) = (log_at(k), log_at(k + 1));
        let (t0, t1) = (timestamps[k], timestamps[k + 1]);
        let crossing_time = |level: f64| {
            let frac = (level - l0) / (l1 - l0);
            let t = t0 as f64 + frac * (t1 - t0) as f64;
            (t.round() as u64).clamp(t0, t1)
        };
        if l1 > l0 {
            while l1 >= reference + c_pos {
                reference += c_pos;
                fire(crossing_time(reference), 1);
            }
        } else if l1 < l0 {
            while l1 <= reference - c_neg {
                reference -= c_neg;
                fire(crossing_time(reference), -1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(delta_log: f64, eps: f64) -> FrameSequence {
        let i0 = 0.2f64;
        let i1 = (i0 + eps) * delta_log.exp() - eps;
        FrameSequence::new(
            1,
            1,
            vec![vec![i0 as f32], vec![i1 as f32]],
            vec![0, 1_000_000],
        )
        .unwrap()
    }

    #[test]
    fn log_of_zero_intensity() {
        let v = log_intensity(&[0.0], 1e-3);
        assert!((v[0] - (-6.907_755_278_982_137)).abs() < 1e-12);
        assert_eq!(log_intensity(&[0.5], 0.5)[0], 0.0);
    }

    #[test]
    fn constant_frames_emit_nothing() {
        let seq = FrameSequence::new(3, 2, vec![vec![0.4; 6]; 5], vec![0, 10, 20, 30, 40]).unwrap();
        let s = generate_events(&seq, &SynthConfig::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.t_begin(), s.t_end()), (0, 41));
    }

    #[test]
    fn single_frame_emits_nothing() {
        let seq = FrameSequence::new(2, 2, vec![vec![0.1; 4]], vec![7]).unwrap();
        assert!(generate_events(&seq, &SynthConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ramp_of_two_and_a_half_thresholds() {
        // Crossings of a linear ramp at c/(2.5c) and 2c/(2.5c) of the interval.
        let cfg = SynthConfig::default();
        let seq = ramp(2.5 * cfg.c_pos, cfg.eps_log);
        let s = generate_events(&seq, &cfg).unwrap();
        let got: Vec<_> = s.events().iter().map(|e| (e.t, e.p)).collect();
        assert_eq!(got.len(), 2);
        assert!(got[0].0.abs_diff(400_000) <= 1 && got[0].1 == 1);
        assert!(got[1].0.abs_diff(800_000) <= 1 && got[1].1 == 1);

        let down = generate_events(&ramp(-2.5 * cfg.c_neg, cfg.eps_log), &cfg).unwrap();
        let got: Vec<_> = down.events().iter().map(|e| (e.t, e.p)).collect();
        assert_eq!(got.len(), 2);
        assert!(got[0].0.abs_diff(400_000) <= 1 && got[0].1 == -1);
        assert!(got[1].0.abs_diff(800_000) <= 1 && got[1].1 == -1);
    }

    #[test]
    fn negated_log_sequence_mirrors_polarity() {
        let logs = vec![vec![0.0, -1.0], vec![0.93, -0.2], vec![0.1, 0.55]];
        let neg: Vec<Vec<f64>> = logs
            .iter()
            .map(|f| f.iter().map(|v| -v).collect())
            .collect();
        let ts = [0, 1000, 2500];
        let cfg = SynthConfig::default();
        let a = generate_events_from_log(2, 1, &logs, &ts, &cfg).unwrap();
        let b = generate_events_from_log(2, 1, &neg, &ts, &cfg).unwrap();
        assert!(!a.is_empty());
        let flipped: Vec<_> = a.events().iter().map(|e| Event { p: -e.p, ..*e }).collect();
        assert_eq!(b.events(), flipped.as_slice());
    }

    #[test]
    fn refractory_suppresses_close_events() {
        let cfg = SynthConfig {
            refractory_ns: 500_000,
            ..SynthConfig::default()
        };
        let s = generate_events(&ramp(2.5 * cfg.c_pos, cfg.eps_log), &cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.events()[0].t.abs_diff(400_000) <= 1);
    }

    #[test]
    fn jitter_is_seeded() {
        let seq =
            FrameSequence::new(4, 4, vec![vec![0.1; 16], vec![0.9; 16]], vec![0, 1000]).unwrap();
        let cfg = SynthConfig {
            threshold_jitter: 0.3,
            seed: 7,
            ..SynthConfig::default()
        };
        let a = generate_events(&seq, &cfg).unwrap();
        let b = generate_events(&seq, &cfg).unwrap();
        assert_eq!(a, b);
        let plain = generate_events(&seq, &SynthConfig::default()).unwrap();
        assert_ne!(a, plain);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(FrameSequence::new(1, 1, vec![], vec![]).is_err());
        assert!(FrameSequence::new(1, 1, vec![vec![0.0], vec![0.0]], vec![5, 5]).is_err());
        assert!(FrameSequence::new(1, 1, vec![vec![1.5]], vec![0]).is_err());
        assert!(FrameSequence::new(2, 1, vec![vec![0.5]], vec![0]).is_err());
        let seq = FrameSequence::new(1, 1, vec![vec![0.0]], vec![0]).unwrap();
        let bad = SynthConfig {
            c_pos: 0.0,
            ..SynthConfig::default()
        };
        assert!(generate_events(&seq, &bad).is_err());
    }

    fn sequence() -> impl Strategy<Value = FrameSequence> {
        (1u16..5, 1u16..5, 2usize..6).prop_flat_map(|(w, h, n)| {
            let px = w as usize * h as usize;
            (
                prop::collection::vec(prop::collection::vec(0f32..=1.0, px), n),
                prop::collection::vec(1u64..10_000, n),
            )
                .prop_map(move |(frames, gaps)| {
                    let ts = gaps
                        .iter()
                        .scan(0u64, |acc, g| {
                            *acc += g;
                            Some(*acc)
                        })
                        .collect();
                    FrameSequence::new(w, h, frames, ts).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn log_is_monotone(a in 0f32..=1.0, b in 0f32..=1.0) {
            let v = log_intensity(&[a, b], 1e-3);
            if a < b {
                prop_assert!(v[0] < v[1]);
            }
        }

        #[test]
        fn output_is_valid_and_deterministic(seq in sequence()) {
            let cfg = SynthConfig::default();
            let s = generate_events(&seq, &cfg).unwrap();
            prop_assert!(s.validate().is_ok());
            prop_assert_eq!(s, generate_events(&seq, &cfg).unwrap());
        }

        #[test]
        fn brightening_pixels_never_emit_negative_events(
            mut levels in prop::collection::vec(0f32..=1.0, 2..10),
        ) {
            levels.sort_by(f32::total_cmp);
            let n = levels.len();
            let frames = levels.iter().map(|&v| vec![v]).collect();
            let seq = FrameSequence::new(1, 1, frames, (0..n as u64).map(|k| k * 1000).collect()).unwrap();
            let cfg = SynthConfig::default();
            let s = generate_events(&seq, &cfg).unwrap();
            prop_assert!(s.events().iter().all(|e| e.p == 1));
            let dlog = ((levels[n - 1] as f64 + cfg.eps_log) / (levels[0] as f64 + cfg.eps_log)).ln();
            prop_assert!(s.len() as f64 <= dlog / cfg.c_pos.min(cfg.c_neg) + 1.0);
        }
    }
}
