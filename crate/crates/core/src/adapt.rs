//! Motion-adaptive flow prediction.
//!
//! The flow estimator only sees displacements up to its search radius. For
//! each B frame the encoder tries the references at reduced resolution
//! (factors 1, 2, 4, 8), scales the estimated flows back up, predicts the
//! current frame from the two half-flow warps, and keeps the factor with the
//! best prediction PSNR. Only the 2-bit factor code is transmitted; the
//! decoder re-derives the flows from its own decoded references.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::flow::{estimate_plane_bidirectional, half_round_up, EstimatorConfig, FlowField, MotionVector};
use crate::frame::{downsample_plane, plane_psnr, Frame, PixelPlane};
use crate::mc::{self, Alphas, BlendMode, BlendModeMap, RefinementField, PYRAMID_LEVELS};

/// Reference downsampling factor, one of 1, 2, 4, 8, coded in 2 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DownsampleFactor(u8);

impl DownsampleFactor {
    pub const ALL: [DownsampleFactor; 4] =
        [DownsampleFactor(0), DownsampleFactor(1), DownsampleFactor(2), DownsampleFactor(3)];
    pub const ONE: DownsampleFactor = DownsampleFactor(0);

    pub fn from_code(code: u8) -> Result<Self> {
        if code > 3 {
            return invalid(format!("factor code {code} does not fit in 2 bits"));
        }
        Ok(DownsampleFactor(code))
    }

    pub fn from_value(value: u32) -> Result<Self> {
        match value {
            1 => Ok(DownsampleFactor(0)),
            2 => Ok(DownsampleFactor(1)),
            4 => Ok(DownsampleFactor(2)),
            8 => Ok(DownsampleFactor(3)),
            _ => invalid(format!("downsampling factor must be 1, 2, 4 or 8, got {value}")),
        }
    }

    #[inline]
    pub fn code(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn value(self) -> u32 {
        1 << self.0
    }

    /// Whether a `width`x`height` frame still holds one estimator block
    /// after reduction by this factor.
    pub fn admissible(self, width: usize, height: usize, cfg: &EstimatorConfig) -> bool {
        let min = self.value() as usize * cfg.block_size;
        width >= min && height >= min
    }
}

impl std::fmt::Display for DownsampleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Flow fields at levels 0..3, level `j` at `1/2^j` resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowPyramid {
    levels: Vec<FlowField>,
}

impl FlowPyramid {
    pub fn level(&self, j: usize) -> &FlowField {
        &self.levels[j]
    }

    pub fn levels(&self) -> &[FlowField] {
        &self.levels
    }
}

/// One pyramid stage: 2x2 component mean, then halve the magnitude, each with
/// round-half-up.
pub fn flow_pyramid_stage(flow: &FlowField) -> FlowField {
    let (w, h) = (flow.width() / 2, flow.height() / 2);
    let out = FlowField::from_fn(w, h, |x, y| {
        let mut sum = MotionVector::ZERO;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            sum = sum + flow.get(2 * x + dx, 2 * y + dy);
        }
        let mean = MotionVector::new((sum.dx + 2) >> 2, (sum.dy + 2) >> 2);
        mean.half()
    });
    let bound = half_round_up(flow.bound());
    out.map(bound, |v| v)
}

pub fn derive_flow_pyramid(flow0: &FlowField) -> Result<FlowPyramid> {
    if !flow0.width().is_multiple_of(8) || !flow0.height().is_multiple_of(8) {
        return invalid(format!(
            "flow pyramid needs dimensions divisible by 8, got {}x{}",
            flow0.width(),
            flow0.height()
        ));
    }
    let mut levels = vec![flow0.clone()];
    for _ in 1..PYRAMID_LEVELS {
        let next = flow_pyramid_stage(levels.last().unwrap());
        levels.push(next);
    }
    Ok(FlowPyramid { levels })
}

/// Scales a reduced-resolution field by `d` and replicates it onto the
/// `width`x`height` grid.
fn upscale_flow(reduced: &FlowField, d: u32, width: usize, height: usize) -> FlowField {
    let k = d as usize;
    let (rw, rh) = (reduced.width(), reduced.height());
    let up = FlowField::from_fn(width, height, |x, y| reduced.get((x / k).min(rw - 1), (y / k).min(rh - 1)).scale(d as i32));
    up.map(reduced.bound() * d as i32, |v| v)
}

/// Luma-plane form of [`predict_flows_at_factor`].
pub fn predict_plane_flows_at_factor(
    past: &PixelPlane,
    future: &PixelPlane,
    d: DownsampleFactor,
    cfg: &EstimatorConfig,
) -> Result<(FlowField, FlowField)> {
    let (w, h) = (past.width(), past.height());
    if future.width() != w || future.height() != h {
        return invalid("references differ in size");
    }
    if !d.admissible(w, h, cfg) {
        return Err(Error::InvalidFactor { factor: d.value(), width: w, height: h });
    }
    if d == DownsampleFactor::ONE {
        return estimate_plane_bidirectional(past, future, cfg);
    }
    let (p, f) = (downsample_plane(past, d)?, downsample_plane(future, d)?);
    let (a, b) = estimate_plane_bidirectional(&p, &f, cfg)?;
    Ok((upscale_flow(&a, d.value(), w, h), upscale_flow(&b, d.value(), w, h)))
}

/// Bidirectional flows estimated on references reduced by `d`, returned at
/// full resolution: `(flow_a, flow_b)`.
pub fn predict_flows_at_factor(
    past: &Frame,
    future: &Frame,
    d: DownsampleFactor,
    cfg: &EstimatorConfig,
) -> Result<(FlowField, FlowField)> {
    predict_plane_flows_at_factor(&past.y, &future.y, d, cfg)
}

/// Rounded average of the future warped by half of `flow_a` and the past
/// warped by half of `flow_b`.
pub fn bidirectional_predict(past: &Frame, future: &Frame, flow_a: &FlowField, flow_b: &FlowField) -> Result<Frame> {
    let (w, h) = (past.width(), past.height());
    mc::compensate(
        past,
        future,
        flow_a,
        flow_b,
        &RefinementField::zero(w, h, Alphas::ZERO),
        &BlendModeMap::uniform(w, h, BlendMode::Average),
    )
}

/// Luma of [`bidirectional_predict`].
pub fn bidirectional_predict_luma(
    past: &PixelPlane,
    future: &PixelPlane,
    flow_a: &FlowField,
    flow_b: &FlowField,
) -> Result<PixelPlane> {
    let (w, h) = (past.width(), past.height());
    let (wp, wf) = mc::warp_references(past, future, flow_a, flow_b, &RefinementField::zero(w, h, Alphas::ZERO))?;
    Ok(PixelPlane::from_fn(w, h, |x, y| ((wp.get(x, y) as u16 + wf.get(x, y) as u16 + 1) >> 1) as u8))
}

/// Luma PSNR of the current frame against its bidirectional prediction.
pub fn prediction_psnr(current: &Frame, past: &Frame, future: &Frame, flow_a: &FlowField, flow_b: &FlowField) -> Result<f64> {
    let pred = bidirectional_predict_luma(&past.y, &future.y, flow_a, flow_b)?;
    plane_psnr(&current.y, &pred)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationReport {
    /// Prediction PSNR per factor code; `-inf` for inadmissible factors.
    pub psnr_per_factor: [f64; 4],
    pub chosen: DownsampleFactor,
}

/// Report plus the flows of the chosen factor.
pub(crate) struct Adaptation {
    pub report: AdaptationReport,
    pub flows: (FlowField, FlowField),
}

pub(crate) fn adapt_factor(
    current: &PixelPlane,
    past: &PixelPlane,
    future: &PixelPlane,
    cfg: &EstimatorConfig,
) -> Result<Adaptation> {
    let (w, h) = (past.width(), past.height());
    if current.width() != w || current.height() != h {
        return invalid("current frame differs in size from references");
    }
    let candidates: Vec<Option<(f64, (FlowField, FlowField))>> = DownsampleFactor::ALL
        .par_iter()
        .map(|&d| -> Result<_> {
            if !d.admissible(w, h, cfg) {
                return Ok(None);
            }
            let (a, b) = predict_plane_flows_at_factor(past, future, d, cfg)?;
            let pred = bidirectional_predict_luma(past, future, &a, &b)?;
            Ok(Some((plane_psnr(current, &pred)?, (a, b))))
        })
        .collect::<Result<_>>()?;

    let mut psnr_per_factor = [f64::NEG_INFINITY; 4];
    let mut best: Option<usize> = None;
    for (code, cand) in candidates.iter().enumerate() {
        if let Some((p, _)) = cand {
            psnr_per_factor[code] = *p;
            if best.is_none_or(|b| *p > psnr_per_factor[b]) {
                best = Some(code);
            }
        }
    }
    let best = best.ok_or_else(|| Error::InvalidInput(format!("no downsampling factor admissible for {w}x{h}")))?;
    let flows = candidates.into_iter().nth(best).flatten().map(|(_, f)| f).expect("chosen candidate");
    Ok(Adaptation {
        report: AdaptationReport { psnr_per_factor, chosen: DownsampleFactor::ALL[best] },
        flows,
    })
}

/// Encoder-side selection of the factor maximising prediction PSNR; ties go
/// to the smaller factor.
pub fn choose_downsampling_factor(
    current: &Frame,
    past: &Frame,
    future: &Frame,
    cfg: &EstimatorConfig,
) -> Result<AdaptationReport> {
    Ok(adapt_factor(&current.y, &past.y, &future.y, cfg)?.report)
}
