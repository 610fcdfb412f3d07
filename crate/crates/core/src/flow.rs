//! Bounded-range bidirectional flow estimation between two decoded references.
//!
//! Full-search block matching on luma over integer offsets in `[-R, R]^2`,
//! followed by an optional half-pel polish. The search range is deliberately
//! bounded: motion beyond `R` pixels cannot be represented at a given scale,
//! which is what makes the choice of downsampling factor matter.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::frame::{Frame, PixelPlane};
use crate::mc::sample_bilinear;

/// Fixed-point precision of all flow vectors: 1/8 pixel.
pub const FLOW_SCALE: i32 = 8;

/// Displacement in 1/8-pixel units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    #[inline]
    pub const fn new(dx: i32, dy: i32) -> Self {
        MotionVector { dx, dy }
    }

    #[inline]
    pub fn scale(self, k: i32) -> Self {
        MotionVector { dx: self.dx * k, dy: self.dy * k }
    }

    /// Component-wise halving, rounding half up.
    #[inline]
    pub fn half(self) -> Self {
        MotionVector { dx: half_round_up(self.dx), dy: half_round_up(self.dy) }
    }

    #[inline]
    pub fn max_abs(self) -> i32 {
        self.dx.abs().max(self.dy.abs())
    }

    #[inline]
    fn norm2(self) -> i64 {
        let (x, y) = (self.dx as i64, self.dy as i64);
        x * x + y * y
    }
}

impl std::ops::Add for MotionVector {
    type Output = MotionVector;
    #[inline]
    fn add(self, o: MotionVector) -> MotionVector {
        MotionVector { dx: self.dx + o.dx, dy: self.dy + o.dy }
    }
}

impl std::ops::Sub for MotionVector {
    type Output = MotionVector;
    #[inline]
    fn sub(self, o: MotionVector) -> MotionVector {
        MotionVector { dx: self.dx - o.dx, dy: self.dy - o.dy }
    }
}

impl std::ops::Neg for MotionVector {
    type Output = MotionVector;
    #[inline]
    fn neg(self) -> MotionVector {
        MotionVector { dx: -self.dx, dy: -self.dy }
    }
}

#[inline]
pub(crate) fn half_round_up(v: i32) -> i32 {
    (v + 1) >> 1
}

/// Ordering key for candidate selection: smaller cost, then shorter vector,
/// then smaller dy, then smaller dx.
#[inline]
pub(crate) fn candidate_key(cost: u64, mv: MotionVector) -> (u64, i64, i32, i32) {
    (cost, mv.norm2(), mv.dy, mv.dx)
}

/// Dense per-pixel displacement field at one scale level.
#[derive(Clone, PartialEq, Eq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<MotionVector>,
    bound: i32,
}

impl std::fmt::Debug for FlowField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FlowField({}x{}, bound {})", self.width, self.height, self.bound)
    }
}

impl FlowField {
    /// Builds a field whose components must all lie within `±bound`.
    pub fn new(width: usize, height: usize, vectors: Vec<MotionVector>, bound: i32) -> Result<Self> {
        if width == 0 || height == 0 || vectors.len() != width * height {
            return invalid(format!("flow field {width}x{height} with {} vectors", vectors.len()));
        }
        if let Some(v) = vectors.iter().find(|v| v.max_abs() > bound) {
            return invalid(format!("flow vector {v:?} exceeds bound {bound}"));
        }
        Ok(FlowField { width, height, vectors, bound })
    }

    pub fn zero(width: usize, height: usize) -> Self {
        FlowField { width, height, vectors: vec![MotionVector::ZERO; width * height], bound: 0 }
    }

    pub fn constant(width: usize, height: usize, mv: MotionVector) -> Self {
        FlowField { width, height, vectors: vec![mv; width * height], bound: mv.max_abs() }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> MotionVector) -> Self {
        let mut vectors = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                vectors.push(f(x, y));
            }
        }
        let bound = vectors.iter().map(|v| v.max_abs()).max().unwrap_or(0);
        FlowField { width, height, vectors, bound }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Declared magnitude bound on every component, in 1/8-pixel units.
    #[inline]
    pub fn bound(&self) -> i32 {
        self.bound
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> MotionVector {
        self.vectors[y * self.width + x]
    }

    #[inline]
    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }

    pub fn map(&self, bound: i32, f: impl Fn(MotionVector) -> MotionVector) -> FlowField {
        FlowField { width: self.width, height: self.height, vectors: self.vectors.iter().map(|&v| f(v)).collect(), bound }
    }

    /// Every vector halved with round-half-up.
    pub fn halved(&self) -> FlowField {
        self.map(half_round_up(self.bound), MotionVector::half)
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|&v| v == MotionVector::ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimatorConfig {
    pub block_size: usize,
    pub search_radius: u32,
    pub halfpel_refine: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { block_size: 16, search_radius: 8, halfpel_refine: true }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size != 8 && self.block_size != 16 {
            return invalid(format!("block size must be 8 or 16, got {}", self.block_size));
        }
        if !(1..=64).contains(&self.search_radius) {
            return invalid(format!("search radius must be in [1, 64], got {}", self.search_radius));
        }
        Ok(())
    }

    /// Largest component magnitude a unit-scale estimate can produce.
    pub fn range_bound(&self) -> i32 {
        FLOW_SCALE * (self.search_radius as i32 + 1)
    }
}

#[derive(Clone, Copy)]
struct BlockRect {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn block_rects(width: usize, height: usize, bs: usize) -> Vec<BlockRect> {
    let mut rects = Vec::new();
    for y0 in (0..height).step_by(bs) {
        for x0 in (0..width).step_by(bs) {
            rects.push(BlockRect { x0, y0, w: bs.min(width - x0), h: bs.min(height - y0) });
        }
    }
    rects
}

/// SAD of the src block against dst displaced by an integer offset, with
/// border clamping. Returns early once the partial sum exceeds `limit`.
fn integer_sad(src: &PixelPlane, dst: &PixelPlane, r: BlockRect, ox: isize, oy: isize, limit: u64) -> u64 {
    let (x1, y1) = (r.x0 as isize + ox, r.y0 as isize + oy);
    let inside = x1 >= 0
        && y1 >= 0
        && x1 + r.w as isize <= dst.width() as isize
        && y1 + r.h as isize <= dst.height() as isize;
    let mut sad = 0u64;
    for j in 0..r.h {
        let srow = &src.row(r.y0 + j)[r.x0..r.x0 + r.w];
        if inside {
            let drow = &dst.row((y1 + j as isize) as usize)[x1 as usize..x1 as usize + r.w];
            sad += srow.iter().zip(drow).map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64).sum::<u64>();
        } else {
            let yy = y1 + j as isize;
            for (i, &a) in srow.iter().enumerate() {
                let b = dst.get_clamped(x1 + i as isize, yy);
                sad += (a as i32 - b as i32).unsigned_abs() as u64;
            }
        }
        if sad > limit {
            return sad;
        }
    }
    sad
}

fn subpel_sad(src: &PixelPlane, dst: &PixelPlane, r: BlockRect, mv: MotionVector) -> u64 {
    let mut sad = 0u64;
    for j in 0..r.h {
        let y = r.y0 + j;
        for i in 0..r.w {
            let x = r.x0 + i;
            let p = sample_bilinear(dst, x as i32 * FLOW_SCALE + mv.dx, y as i32 * FLOW_SCALE + mv.dy);
            sad += (src.get(x, y) as i32 - p as i32).unsigned_abs() as u64;
        }
    }
    sad
}

fn search_block(src: &PixelPlane, dst: &PixelPlane, r: BlockRect, cfg: &EstimatorConfig) -> MotionVector {
    let radius = cfg.search_radius as isize;
    let mut best_mv = MotionVector::ZERO;
    let mut best_key = candidate_key(integer_sad(src, dst, r, 0, 0, u64::MAX), best_mv);
    for oy in -radius..=radius {
        for ox in -radius..=radius {
            if ox == 0 && oy == 0 {
                continue;
            }
            let sad = integer_sad(src, dst, r, ox, oy, best_key.0);
            if sad > best_key.0 {
                continue;
            }
            let mv = MotionVector::new(ox as i32 * FLOW_SCALE, oy as i32 * FLOW_SCALE);
            let key = candidate_key(sad, mv);
            if key < best_key {
                best_key = key;
                best_mv = mv;
            }
        }
    }
    if cfg.halfpel_refine {
        let center = best_mv;
        let half = FLOW_SCALE / 2;
        for hy in [-half, 0, half] {
            for hx in [-half, 0, half] {
                if hx == 0 && hy == 0 {
                    continue;
                }
                let mv = center + MotionVector::new(hx, hy);
                let key = candidate_key(subpel_sad(src, dst, r, mv), mv);
                if key < best_key {
                    best_key = key;
                    best_mv = mv;
                }
            }
        }
    }
    best_mv
}

/// Block-matching flow on luma planes such that `src(p) ≈ dst(p + f(p))`.
///
/// Edge blocks that do not fill a whole `block_size` tile are matched over
/// their clipped extent.
pub fn estimate_plane_flow(src: &PixelPlane, dst: &PixelPlane, cfg: &EstimatorConfig) -> Result<FlowField> {
    cfg.validate()?;
    if src.width() != dst.width() || src.height() != dst.height() {
        return invalid(format!(
            "flow endpoints differ in size: {}x{} vs {}x{}",
            src.width(),
            src.height(),
            dst.width(),
            dst.height()
        ));
    }
    let (w, h, bs) = (src.width(), src.height(), cfg.block_size);
    let rects = block_rects(w, h, bs);
    let block_vectors: Vec<MotionVector> = rects.par_iter().map(|&r| search_block(src, dst, r, cfg)).collect();
    let blocks_per_row = w.div_ceil(bs);
    let field = FlowField::from_fn(w, h, |x, y| block_vectors[(y / bs) * blocks_per_row + x / bs]);
    Ok(FlowField { bound: cfg.range_bound(), ..field })
}

/// Flow from `src` to `dst` on the luma planes.
pub fn estimate_flow(src: &Frame, dst: &Frame, cfg: &EstimatorConfig) -> Result<FlowField> {
    estimate_plane_flow(&src.y, &dst.y, cfg)
}

/// Returns `(flow_a, flow_b)`: past → future and future → past.
pub fn estimate_bidirectional(past: &Frame, future: &Frame, cfg: &EstimatorConfig) -> Result<(FlowField, FlowField)> {
    estimate_plane_bidirectional(&past.y, &future.y, cfg)
}

pub(crate) fn estimate_plane_bidirectional(
    past: &PixelPlane,
    future: &PixelPlane,
    cfg: &EstimatorConfig,
) -> Result<(FlowField, FlowField)> {
    let (a, b) = rayon::join(|| estimate_plane_flow(past, future, cfg), || estimate_plane_flow(future, past, cfg));
    Ok((a?, b?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{texture_plane, translate_plane};

    fn frame_of(y: PixelPlane) -> Frame {
        let (w, h) = (y.width(), y.height());
        let mut f = Frame::filled(w, h, 0, 128);
        f.y = y;
        f
    }

    /// Exhaustive integer search written without early exits or fast paths.
    fn oracle_block(src: &PixelPlane, dst: &PixelPlane, x0: usize, y0: usize, bs: usize, r: i32) -> (i32, i32, u64) {
        let mut best = (0, 0, u64::MAX);
        let mut best_key = (u64::MAX, 0i64, 0, 0);
        for dy in -r..=r {
            for dx in -r..=r {
                let mut sad = 0u64;
                for y in y0..y0 + bs {
                    for x in x0..x0 + bs {
                        let b = dst.get_clamped(x as isize + dx as isize, y as isize + dy as isize);
                        sad += (src.get(x, y) as i64 - b as i64).unsigned_abs();
                    }
                }
                let key = (sad, (dx * dx + dy * dy) as i64, dy, dx);
                if key < best_key {
                    best_key = key;
                    best = (dx, dy, sad);
                }
            }
        }
        best
    }

    #[test]
    fn identical_frames_give_zero_field() {
        let p = texture_plane(64, 48, 3);
        let f = estimate_plane_flow(&p, &p, &EstimatorConfig::default()).unwrap();
        assert!(f.is_zero());
    }

    #[test]
    fn flat_frames_give_zero_field() {
        let p = PixelPlane::filled(64, 64, 77);
        let f = estimate_plane_flow(&p, &p, &EstimatorConfig::default()).unwrap();
        assert!(f.is_zero());
    }

    #[test]
    fn translation_of_three_pixels() {
        let src = texture_plane(96, 64, 11);
        let dst = translate_plane(&src, 3, 0);
        let cfg = EstimatorConfig::default();
        let f = estimate_plane_flow(&src, &dst, &cfg).unwrap();
        // interior blocks: at least R from every border
        for by in 1..3 {
            for bx in 1..5 {
                let (ox, oy, sad) = oracle_block(&src, &dst, bx * 16, by * 16, 16, 8);
                assert_eq!((ox, oy, sad), (3, 0, 0));
                assert_eq!(f.get(bx * 16 + 5, by * 16 + 5), MotionVector::new(24, 0));
            }
        }
    }

    #[test]
    fn out_of_range_translation_is_clipped() {
        let src = texture_plane(128, 64, 5);
        let dst = translate_plane(&src, 30, 0);
        let cfg = EstimatorConfig::default();
        let f = estimate_plane_flow(&src, &dst, &cfg).unwrap();
        let mut total_sad = 0;
        for by in 1..3 {
            for bx in 1..7 {
                let v = f.get(bx * 16, by * 16);
                assert!(v.dx.abs() <= 8 * 8 + 4, "{v:?}");
                let (_, _, sad) = oracle_block(&src, &dst, bx * 16, by * 16, 16, 8);
                assert!(sad > 0, "no in-window offset should match exactly");
                total_sad += sad;
            }
        }
        assert!(total_sad > 12 * 256, "residual should be large, got {total_sad}");
    }

    #[test]
    fn bidirectional_translation_is_antisymmetric() {
        let past = texture_plane(96, 64, 21);
        let future = translate_plane(&past, 6, 0);
        let cfg = EstimatorConfig::default();
        let (a, b) = estimate_bidirectional(&frame_of(past), &frame_of(future), &cfg).unwrap();
        for by in 1..3 {
            for bx in 1..5 {
                let (x, y) = (bx * 16 + 3, by * 16 + 9);
                assert_eq!(a.get(x, y), MotionVector::new(48, 0));
                assert_eq!(b.get(x, y), MotionVector::new(-48, 0));
            }
        }
    }

    #[test]
    fn static_scene_bidirectional_zero() {
        let p = frame_of(texture_plane(64, 64, 2));
        let (a, b) = estimate_bidirectional(&p, &p, &EstimatorConfig::default()).unwrap();
        assert!(a.is_zero() && b.is_zero());
    }

    #[test]
    fn range_bound_respected() {
        let src = texture_plane(64, 64, 8);
        let dst = texture_plane(64, 64, 9);
        let cfg = EstimatorConfig { search_radius: 4, ..Default::default() };
        let f = estimate_plane_flow(&src, &dst, &cfg).unwrap();
        assert!(f.vectors().iter().all(|v| v.max_abs() <= 8 * 5));
        assert_eq!(f.bound(), 40);
    }

    #[test]
    fn rejects_bad_config_and_geometry() {
        let p = PixelPlane::filled(32, 32, 0);
        let q = PixelPlane::filled(32, 16, 0);
        assert!(estimate_plane_flow(&p, &q, &EstimatorConfig::default()).is_err());
        let bad = EstimatorConfig { block_size: 12, ..Default::default() };
        assert!(estimate_plane_flow(&p, &p, &bad).is_err());
        let bad = EstimatorConfig { search_radius: 0, ..Default::default() };
        assert!(estimate_plane_flow(&p, &p, &bad).is_err());
    }

    #[test]
    fn partial_edge_blocks_are_handled() {
        let src = texture_plane(40, 24, 4);
        let dst = translate_plane(&src, 2, 1);
        let f = estimate_plane_flow(&src, &dst, &EstimatorConfig { block_size: 16, ..Default::default() }).unwrap();
        assert_eq!((f.width(), f.height()), (40, 24));
        assert_eq!(f.get(20, 8), MotionVector::new(16, 8));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let src = texture_plane(96, 96, 14);
        let dst = translate_plane(&src, -5, 2);
        let cfg = EstimatorConfig::default();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| estimate_plane_flow(&src, &dst, &cfg).unwrap());
        let b = four.install(|| estimate_plane_flow(&src, &dst, &cfg).unwrap());
        assert_eq!(a, b);
    }
}
