//! Background extraction and segmentation scoring.

use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::mask::BinaryMask;
use crate::par;
use crate::voxel::{frame_windows, NormMode, VoxelGrid};

/// Predicted per-pixel probability of a dynamic object.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}×{width} soft mask",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid(format!(
                "soft mask value {} at {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<&BinaryMask> for SoftMask {
    fn from(m: &BinaryMask) -> Self {
        Self {
            height: m.height(),
            width: m.width(),
            values: m
                .bits()
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// Zeroes every bin of each masked pixel in one `B×H×W` frame.
pub fn apply_mask(frame: &[f32], mask: &BinaryMask) -> Result<Vec<f32>> {
    let mut out = frame.to_vec();
    apply_mask_in_place(&mut out, mask)?;
    Ok(out)
}

pub fn apply_mask_in_place(frame: &mut [f32], mask: &BinaryMask) -> Result<()> {
    let plane = mask.height() * mask.width();
    if plane == 0 {
        return if frame.is_empty() {
            Ok(())
        } else {
            Err(Error::Shape("empty mask for a non-empty frame".into()))
        };
    }
    if !frame.len().is_multiple_of(plane) {
        return Err(Error::Shape(format!(
            "frame of {} cells is not a multiple of the {}×{} mask",
            frame.len(),
            mask.height(),
            mask.width()
        )));
    }
    for bin in frame.chunks_mut(plane) {
        for (v, &m) in bin.iter_mut().zip(mask.bits()) {
            if m {
                *v = 0.0;
            }
        }
    }
    Ok(())
}

/// Applies one mask per frame and marks the grid as masked.
pub fn apply_masks(grid: &VoxelGrid, masks: &[BinaryMask]) -> Result<VoxelGrid> {
    if masks.len() != grid.frames() {
        return Err(Error::Shape(format!(
            "{} masks for {} frames",
            masks.len(),
            grid.frames()
        )));
    }
    if let Some(m) = masks
        .iter()
        .find(|m| (m.height(), m.width()) != (grid.height(), grid.width()))
    {
        return Err(Error::Shape(format!(
            "mask {}×{} vs grid {}×{}",
            m.height(),
            m.width(),
            grid.height(),
            grid.width()
        )));
    }
    let mut out = grid.clone();
    let frame_len = out.frame_len();
    par::for_each_chunk_mut(out.values_mut(), frame_len, |k, frame| {
        // Shapes were checked above.
        let _ = apply_mask_in_place(frame, &masks[k]);
    });
    out.set_mask_applied(true);
    Ok(out)
}

/// Order of masking and normalization in [`extract_background`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PipelineOrder {
    #[default]
    MaskThenNormalize,
    NormalizeThenMask,
}

/// Masks a raw grid and normalizes it in the requested order.
pub fn extract_background(
    raw: &VoxelGrid,
    masks: &[BinaryMask],
    norm: Option<NormMode>,
    order: PipelineOrder,
) -> Result<VoxelGrid> {
    if raw.is_normalized() {
        return Err(Error::Invalid("expected a raw (unnormalized) grid".into()));
    }
    match (norm, order) {
        (None, _) => apply_masks(raw, masks),
        (Some(mode), PipelineOrder::MaskThenNormalize) => {
            let mut g = apply_masks(raw, masks)?;
            g.normalize(mode)?;
            Ok(g)
        }
        (Some(mode), PipelineOrder::NormalizeThenMask) => {
            let mut g = raw.clone();
            g.normalize(mode)?;
            apply_masks(&g, masks)
        }
    }
}

/// Drops events on masked pixels, using the mask of the frame each event
/// falls into.
pub fn remove_masked_events(
    stream: &EventStream,
    fps: f64,
    masks: &[BinaryMask],
) -> Result<EventStream> {
    let windows = frame_windows(stream.t_begin(), stream.t_end(), fps)?;
    if masks.len() != windows.len() {
        return Err(Error::Shape(format!(
            "{} masks for {} frames",
            masks.len(),
            windows.len()
        )));
    }
    let mut kept = Vec::with_capacity(stream.len());
    for w in &windows {
        let mask = &masks[w.index];
        let range = stream.index_range(w.t_start, w.t_end);
        kept.extend(stream.events()[range].iter().filter(|e| {
            let (x, y) = (e.x as usize, e.y as usize);
            !(y < mask.height() && x < mask.width() && mask.get(y, x))
        }));
    }
    Ok(stream.with_events(kept))
}

/// Default clamp applied to predictions inside [`bce_loss`].
pub const BCE_CLAMP_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all pixels, with predictions clamped to
/// `[eps, 1 − eps]`.
pub fn bce_loss(pred: &SoftMask, gt: &BinaryMask, clamp_eps: f64) -> Result<f64> {
    if (pred.height, pred.width) != (gt.height(), gt.width()) {
        return Err(Error::Shape(format!(
            "prediction {}×{} vs ground truth {}×{}",
            pred.height,
            pred.width,
            gt.height(),
            gt.width()
        )));
    }
    if !(clamp_eps > 0.0 && clamp_eps < 0.5) {
        return Err(Error::Invalid(format!(
            "clamp_eps must lie in (0, 0.5), got {clamp_eps}"
        )));
    }
    let n = pred.values.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .values
        .iter()
        .zip(gt.bits())
        .map(|(&p, &m)| {
            let p = p.clamp(clamp_eps, 1.0 - clamp_eps);
            if m {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / n as f64)
}

/// Pixels with value `>= tau`.
pub fn threshold_mask(pred: &SoftMask, tau: f64) -> BinaryMask {
    let bits = pred.values.iter().map(|&v| v >= tau).collect();
    BinaryMask::from_bits(pred.height, pred.width, bits).expect("shape preserved")
}

/// Intersection over union; two empty masks score 1.
pub fn mask_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.bits().iter().zip(gt.bits()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean BCE and IoU over a sequence of predictions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegmentationReport {
    pub frames: usize,
    pub bce: f64,
    pub iou: f64,
    pub tau: f64,
    pub bce_per_frame: Vec<f64>,
    pub iou_per_frame: Vec<f64>,
}

pub fn evaluate_segmentation(
    preds: &[SoftMask],
    gts: &[BinaryMask],
    tau: f64,
    clamp_eps: f64,
) -> Result<SegmentationReport> {
    if preds.len() != gts.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    let mut bce_per_frame = Vec::with_capacity(preds.len());
    let mut iou_per_frame = Vec::with_capacity(preds.len());
    for (p, g) in preds.iter().zip(gts) {
        bce_per_frame.push(bce_loss(p, g, clamp_eps)?);
        iou_per_frame.push(mask_iou(&threshold_mask(p, tau), g)?);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(SegmentationReport {
        frames: preds.len(),
        bce: mean(&bce_per_frame),
        iou: mean(&iou_per_frame),
        tau,
        bce_per_frame,
        iou_per_frame,
    })
}
