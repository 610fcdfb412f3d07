//! Motion-compensated prediction: backward warping, multi-scale pyramids,
//! flow-guided bounded offset refinement and per-block blend modes.
//!
//! The final offset used for a reference at a pixel is its half-flow plus a
//! per-block correction. The correction is searched coarse-to-fine over
//! levels 2, 1, 0 and is bounded per level by `alpha`; the future reference
//! receives `+c` and the past reference `-c`.

use rayon::prelude::*;

use crate::adapt::FlowPyramid;
use crate::error::{invalid, Result};
use crate::flow::{candidate_key, FlowField, MotionVector, FLOW_SCALE};
use crate::frame::{downsample_plane, Frame, PixelPlane};
use crate::adapt::DownsampleFactor;

/// Block size for refinement corrections and blend modes, at every level.
pub const MC_BLOCK: usize = 16;
/// Number of pyramid levels (j = 0..3).
pub const PYRAMID_LEVELS: usize = 4;
/// Number of levels carrying refinement corrections (j = 0..2).
pub const REFINE_LEVELS: usize = 3;

/// Bilinear sample at a position given in 1/8-pixel units, with border clamp
/// and round-half-up.
#[inline]
pub fn sample_bilinear(plane: &PixelPlane, x8: i32, y8: i32) -> u8 {
    let (x0, y0) = ((x8 >> 3) as isize, (y8 >> 3) as isize);
    let (fx, fy) = (x8 & 7, y8 & 7);
    let a = plane.get_clamped(x0, y0) as i32;
    if fx == 0 && fy == 0 {
        return a as u8;
    }
    let b = plane.get_clamped(x0 + 1, y0) as i32;
    let c = plane.get_clamped(x0, y0 + 1) as i32;
    let d = plane.get_clamped(x0 + 1, y0 + 1) as i32;
    let v = a * (8 - fx) * (8 - fy) + b * fx * (8 - fy) + c * (8 - fx) * fy + d * fx * fy;
    ((v + 32) >> 6) as u8
}

#[inline]
fn sample_at(plane: &PixelPlane, x: usize, y: usize, mv: MotionVector) -> u8 {
    sample_bilinear(plane, x as i32 * FLOW_SCALE + mv.dx, y as i32 * FLOW_SCALE + mv.dy)
}

#[inline]
fn average(a: u8, b: u8) -> u8 {
    ((a as u16 + b as u16 + 1) >> 1) as u8
}

/// Backward warp: `out(p) = in(p + f(p))`.
pub fn warp(plane: &PixelPlane, flow: &FlowField) -> Result<PixelPlane> {
    if plane.width() != flow.width() || plane.height() != flow.height() {
        return invalid(format!(
            "flow grid {}x{} does not match plane {}x{}",
            flow.width(),
            flow.height(),
            plane.width(),
            plane.height()
        ));
    }
    Ok(PixelPlane::from_fn(plane.width(), plane.height(), |x, y| sample_at(plane, x, y, flow.get(x, y))))
}

/// Luma pyramid, each level a 2x rounded block-mean reduction of the previous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImagePyramid {
    levels: Vec<PixelPlane>,
}

impl ImagePyramid {
    pub fn build(plane: &PixelPlane) -> Result<Self> {
        let two = DownsampleFactor::from_value(2)?;
        let mut levels = vec![plane.clone()];
        for _ in 1..PYRAMID_LEVELS {
            let next = downsample_plane(levels.last().unwrap(), two)?;
            levels.push(next);
        }
        Ok(ImagePyramid { levels })
    }

    pub fn from_levels(levels: Vec<PixelPlane>) -> Self {
        ImagePyramid { levels }
    }

    pub fn level(&self, j: usize) -> &PixelPlane {
        &self.levels[j]
    }

    pub fn levels(&self) -> &[PixelPlane] {
        &self.levels
    }
}

/// Warps each pyramid level by half of the same level's flow. Returns
/// `(warped_past, warped_future)`; the future uses `flow_a`, the past `flow_b`.
pub fn warp_pyramids(
    past: &ImagePyramid,
    future: &ImagePyramid,
    flow_a: &FlowPyramid,
    flow_b: &FlowPyramid,
) -> Result<(ImagePyramid, ImagePyramid)> {
    let n = past.levels.len();
    if future.levels.len() != n || flow_a.levels().len() != n || flow_b.levels().len() != n {
        return invalid("pyramid level counts differ");
    }
    let mut wp = Vec::with_capacity(n);
    let mut wf = Vec::with_capacity(n);
    for j in 0..n {
        wf.push(warp(future.level(j), &flow_a.level(j).halved())?);
        wp.push(warp(past.level(j), &flow_b.level(j).halved())?);
    }
    Ok((ImagePyramid { levels: wp }, ImagePyramid { levels: wf }))
}

/// Per-level bound on correction magnitude, in 1/8 pixel of that level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alphas(pub [u32; REFINE_LEVELS]);

impl Default for Alphas {
    /// 0.5, 1 and 2 pixels at levels 0, 1, 2.
    fn default() -> Self {
        Alphas([4, 8, 16])
    }
}

impl Alphas {
    pub const ZERO: Alphas = Alphas([0; REFINE_LEVELS]);

    /// Correction granularity at level `j`: 1/8 pixel at level 0, whole
    /// pixels above.
    pub fn step(j: usize) -> i32 {
        if j == 0 {
            1
        } else {
            FLOW_SCALE
        }
    }

    /// Largest admissible multiple of the level step, per component.
    pub fn max_steps(&self, j: usize) -> i32 {
        self.0[j] as i32 / Self::step(j)
    }

    pub fn is_zero(&self) -> bool {
        (0..REFINE_LEVELS).all(|j| self.max_steps(j) == 0)
    }
}

/// Block-grid dimensions of level `j` for a level-0 frame size.
pub fn level_grid(width: usize, height: usize, j: usize) -> (usize, usize) {
    ((width >> j).div_ceil(MC_BLOCK), (height >> j).div_ceil(MC_BLOCK))
}

/// Transmitted per-block corrections for levels 0..2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefinementField {
    width: usize,
    height: usize,
    alphas: Alphas,
    levels: [Vec<MotionVector>; REFINE_LEVELS],
}

impl RefinementField {
    pub fn zero(width: usize, height: usize, alphas: Alphas) -> Self {
        let levels = std::array::from_fn(|j| {
            let (gw, gh) = level_grid(width, height, j);
            vec![MotionVector::ZERO; gw * gh]
        });
        RefinementField { width, height, alphas, levels }
    }

    /// Builds a field from decoded corrections, checking bound and step.
    pub fn new(width: usize, height: usize, alphas: Alphas, levels: [Vec<MotionVector>; REFINE_LEVELS]) -> Result<Self> {
        for (j, level) in levels.iter().enumerate() {
            let (gw, gh) = level_grid(width, height, j);
            if level.len() != gw * gh {
                return invalid(format!("level {j} has {} corrections, expected {}", level.len(), gw * gh));
            }
            let step = Alphas::step(j);
            let lim = alphas.max_steps(j) * step;
            if let Some(c) = level.iter().find(|c| c.max_abs() > lim || c.dx % step != 0 || c.dy % step != 0) {
                return invalid(format!("level {j} correction {c:?} violates bound ±{lim} step {step}"));
            }
        }
        Ok(RefinementField { width, height, alphas, levels })
    }

    pub fn alphas(&self) -> Alphas {
        self.alphas
    }

    pub fn level(&self, j: usize) -> &[MotionVector] {
        &self.levels[j]
    }

    pub fn grid(&self, j: usize) -> (usize, usize) {
        level_grid(self.width, self.height, j)
    }

    pub fn get(&self, j: usize, bx: usize, by: usize) -> MotionVector {
        let (gw, _) = self.grid(j);
        self.levels[j][by * gw + bx]
    }

    /// Sum of the corrections of all levels coarser than `j` covering block
    /// `(bx, by)` of level `j`, in level-`j` units.
    pub fn inherited(&self, j: usize, bx: usize, by: usize) -> MotionVector {
        let mut acc = MotionVector::ZERO;
        for k in j + 1..REFINE_LEVELS {
            let s = k - j;
            let (gw, gh) = self.grid(k);
            let (px, py) = ((bx >> s).min(gw - 1), (by >> s).min(gh - 1));
            acc = acc + self.get(k, px, py).scale(1 << s);
        }
        acc
    }

    /// Total correction applied at level 0 to block `(bx, by)`.
    pub fn total(&self, bx: usize, by: usize) -> MotionVector {
        self.inherited(0, bx, by) + self.get(0, bx, by)
    }

    pub fn is_zero(&self) -> bool {
        self.levels.iter().all(|l| l.iter().all(|&c| c == MotionVector::ZERO))
    }
}

fn check_pyramids(pyrs: &[&ImagePyramid], flows: &[&FlowPyramid]) -> Result<()> {
    let base = pyrs[0].level(0);
    for p in pyrs {
        if p.levels.len() < REFINE_LEVELS || p.level(0).width() != base.width() || p.level(0).height() != base.height() {
            return invalid("image pyramids disagree in geometry");
        }
    }
    for f in flows {
        if f.levels().len() < REFINE_LEVELS {
            return invalid("flow pyramid too shallow");
        }
        for j in 0..REFINE_LEVELS {
            let (lp, lf) = (pyrs[0].level(j), f.level(j));
            if lp.width() != lf.width() || lp.height() != lf.height() {
                return invalid(format!("flow level {j} does not match image level {j}"));
            }
        }
    }
    Ok(())
}

/// Blended-prediction SAD of one block with a given total correction.
#[allow(clippy::too_many_arguments)]
fn blended_sad(
    current: &PixelPlane,
    past: &PixelPlane,
    future: &PixelPlane,
    half_a: &FlowField,
    half_b: &FlowField,
    x0: usize,
    y0: usize,
    correction: MotionVector,
    limit: u64,
) -> u64 {
    let x1 = (x0 + MC_BLOCK).min(current.width());
    let y1 = (y0 + MC_BLOCK).min(current.height());
    let mut sad = 0u64;
    for y in y0..y1 {
        for x in x0..x1 {
            let f = sample_at(future, x, y, half_a.get(x, y) + correction);
            let p = sample_at(past, x, y, half_b.get(x, y) - correction);
            sad += (current.get(x, y) as i32 - average(f, p) as i32).unsigned_abs() as u64;
        }
        if sad > limit {
            break;
        }
    }
    sad
}

/// Encoder-side coarse-to-fine search of bounded per-block corrections.
pub fn refine_offsets(
    current: &ImagePyramid,
    past: &ImagePyramid,
    future: &ImagePyramid,
    flow_a: &FlowPyramid,
    flow_b: &FlowPyramid,
    alphas: Alphas,
) -> Result<RefinementField> {
    check_pyramids(&[current, past, future], &[flow_a, flow_b])?;
    let (w, h) = (current.level(0).width(), current.level(0).height());
    let mut field = RefinementField::zero(w, h, alphas);
    for j in (0..REFINE_LEVELS).rev() {
        let n = alphas.max_steps(j);
        if n == 0 {
            continue;
        }
        let step = Alphas::step(j);
        let (gw, gh) = level_grid(w, h, j);
        let (cur, pst, fut) = (current.level(j), past.level(j), future.level(j));
        let (ha, hb) = (flow_a.level(j).halved(), flow_b.level(j).halved());
        let candidates: Vec<MotionVector> = (-n..=n)
            .flat_map(|cy| (-n..=n).map(move |cx| MotionVector::new(cx * step, cy * step)))
            .collect();
        let snapshot = &field;
        let level: Vec<MotionVector> = (0..gw * gh)
            .into_par_iter()
            .map(|b| {
                let (bx, by) = (b % gw, b / gw);
                let inherited = snapshot.inherited(j, bx, by);
                let (x0, y0) = (bx * MC_BLOCK, by * MC_BLOCK);
                let mut best = MotionVector::ZERO;
                let mut best_key = candidate_key(blended_sad(cur, pst, fut, &ha, &hb, x0, y0, inherited, u64::MAX), best);
                for &c in &candidates {
                    if c == MotionVector::ZERO {
                        continue;
                    }
                    let sad = blended_sad(cur, pst, fut, &ha, &hb, x0, y0, inherited + c, best_key.0);
                    let key = candidate_key(sad, c);
                    if key < best_key {
                        best_key = key;
                        best = c;
                    }
                }
                best
            })
            .collect();
        field.levels[j] = level;
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum BlendMode {
    Average = 0,
    PastOnly = 1,
    FutureOnly = 2,
}

impl BlendMode {
    pub const ALL: [BlendMode; 3] = [BlendMode::Average, BlendMode::PastOnly, BlendMode::FutureOnly];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Code 3 is reserved.
    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    #[inline]
    fn combine(self, past: u8, future: u8) -> u8 {
        match self {
            BlendMode::Average => average(past, future),
            BlendMode::PastOnly => past,
            BlendMode::FutureOnly => future,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlendModeMap {
    blocks_w: usize,
    blocks_h: usize,
    modes: Vec<BlendMode>,
}

impl BlendModeMap {
    pub fn uniform(width: usize, height: usize, mode: BlendMode) -> Self {
        let (bw, bh) = level_grid(width, height, 0);
        BlendModeMap { blocks_w: bw, blocks_h: bh, modes: vec![mode; bw * bh] }
    }

    pub fn new(width: usize, height: usize, modes: Vec<BlendMode>) -> Result<Self> {
        let (bw, bh) = level_grid(width, height, 0);
        if modes.len() != bw * bh {
            return invalid(format!("{} blend modes for a {bw}x{bh} block grid", modes.len()));
        }
        Ok(BlendModeMap { blocks_w: bw, blocks_h: bh, modes })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.blocks_w, self.blocks_h)
    }

    pub fn modes(&self) -> &[BlendMode] {
        &self.modes
    }

    #[inline]
    pub fn get(&self, bx: usize, by: usize) -> BlendMode {
        self.modes[by * self.blocks_w + bx]
    }
}

/// Encoder-side per-block choice of the blend with least luma SAD.
pub fn choose_blend_modes(current: &PixelPlane, warped_past: &PixelPlane, warped_future: &PixelPlane) -> Result<BlendModeMap> {
    for p in [warped_past, warped_future] {
        if p.width() != current.width() || p.height() != current.height() {
            return invalid("warped reference does not match current frame");
        }
    }
    let (w, h) = (current.width(), current.height());
    let (bw, bh) = level_grid(w, h, 0);
    let modes = (0..bw * bh)
        .map(|b| {
            let (x0, y0) = ((b % bw) * MC_BLOCK, (b / bw) * MC_BLOCK);
            let mut sads = [0u64; 3];
            for y in y0..(y0 + MC_BLOCK).min(h) {
                for x in x0..(x0 + MC_BLOCK).min(w) {
                    let (c, p, f) = (current.get(x, y), warped_past.get(x, y), warped_future.get(x, y));
                    for (m, s) in BlendMode::ALL.iter().zip(sads.iter_mut()) {
                        *s += (c as i32 - m.combine(p, f) as i32).unsigned_abs() as u64;
                    }
                }
            }
            // strict comparison keeps the earlier mode on ties
            let mut best = 0;
            for m in 1..3 {
                if sads[m] < sads[best] {
                    best = m;
                }
            }
            BlendMode::ALL[best]
        })
        .collect();
    Ok(BlendModeMap { blocks_w: bw, blocks_h: bh, modes })
}

/// Full-resolution half-flows and refinement, resolved to a per-pixel offset
/// pair for each reference.
struct OffsetPlan<'a> {
    half_a: FlowField,
    half_b: FlowField,
    refinement: &'a RefinementField,
}

impl OffsetPlan<'_> {
    #[inline]
    fn luma(&self, x: usize, y: usize) -> (MotionVector, MotionVector) {
        let c = self.refinement.total(x / MC_BLOCK, y / MC_BLOCK);
        (self.half_b.get(x, y) - c, self.half_a.get(x, y) + c)
    }
}

fn offset_plan<'a>(
    width: usize,
    height: usize,
    flow_a: &FlowField,
    flow_b: &FlowField,
    refinement: &'a RefinementField,
) -> Result<OffsetPlan<'a>> {
    for f in [flow_a, flow_b] {
        if f.width() != width || f.height() != height {
            return invalid(format!("flow {}x{} does not match frame {width}x{height}", f.width(), f.height()));
        }
    }
    if refinement.width != width || refinement.height != height {
        return invalid("refinement field geometry does not match frame");
    }
    Ok(OffsetPlan { half_a: flow_a.halved(), half_b: flow_b.halved(), refinement })
}

/// Luma of both references warped with the final offsets: `(past, future)`.
pub fn warp_references(
    past: &PixelPlane,
    future: &PixelPlane,
    flow_a: &FlowField,
    flow_b: &FlowField,
    refinement: &RefinementField,
) -> Result<(PixelPlane, PixelPlane)> {
    let (w, h) = (past.width(), past.height());
    let plan = offset_plan(w, h, flow_a, flow_b, refinement)?;
    let wp = PixelPlane::from_fn(w, h, |x, y| sample_at(past, x, y, plan.luma(x, y).0));
    let wf = PixelPlane::from_fn(w, h, |x, y| sample_at(future, x, y, plan.luma(x, y).1));
    Ok((wp, wf))
}

/// Produces the motion-compensated prediction of the current frame. Chroma
/// uses the luma offsets at the co-sited luma sample, halved for 4:2:0.
pub fn compensate(
    past: &Frame,
    future: &Frame,
    flow_a: &FlowField,
    flow_b: &FlowField,
    refinement: &RefinementField,
    modes: &BlendModeMap,
) -> Result<Frame> {
    if !past.same_geometry(future) {
        return invalid("references differ in size");
    }
    let (w, h) = (past.width(), past.height());
    let plan = offset_plan(w, h, flow_a, flow_b, refinement)?;
    if modes.grid() != level_grid(w, h, 0) {
        return invalid("blend mode map does not match frame");
    }
    let y = PixelPlane::from_fn(w, h, |x, y| {
        let (op, of) = plan.luma(x, y);
        let mode = modes.get(x / MC_BLOCK, y / MC_BLOCK);
        mode.combine(sample_at(&past.y, x, y, op), sample_at(&future.y, x, y, of))
    });
    let chroma = |pp: &PixelPlane, fp: &PixelPlane| {
        PixelPlane::from_fn(pp.width(), pp.height(), |cx, cy| {
            let (lx, ly) = ((2 * cx).min(w - 1), (2 * cy).min(h - 1));
            let (op, of) = plan.luma(lx, ly);
            let mode = modes.get(lx / MC_BLOCK, ly / MC_BLOCK);
            mode.combine(sample_at(pp, cx, cy, op.half()), sample_at(fp, cx, cy, of.half()))
        })
    };
    let u = chroma(&past.u, &future.u);
    let v = chroma(&past.v, &future.v);
    Frame::new(y, u, v, 0)
}

/// Per-block luma SAD between two planes.
pub fn block_sads(a: &PixelPlane, b: &PixelPlane) -> Vec<u64> {
    let (w, h) = (a.width(), a.height());
    let (bw, bh) = level_grid(w, h, 0);
    let mut out = vec![0u64; bw * bh];
    for y in 0..h {
        for x in 0..w {
            out[(y / MC_BLOCK) * bw + x / MC_BLOCK] += (a.get(x, y) as i32 - b.get(x, y) as i32).unsigned_abs() as u64;
        }
    }
    out
}
