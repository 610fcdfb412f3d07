//! Deterministic synthetic content: multi-octave value-noise textures and the
//! test sequences built from them (static, global pans, zoom).

use crate::frame::{chroma_dim, Frame, PixelPlane, VideoSequence};

fn hash(ix: i64, iy: i64, octave: u32, seed: u64) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [ix as u64, iy as u64, octave as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(27).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn lattice(ix: i64, iy: i64, octave: u32, seed: u64) -> f64 {
    (hash(ix, iy, octave, seed) >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Infinite procedural texture evaluated at real coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Texture {
    pub seed: u64,
}

impl Texture {
    const OCTAVES: [(f64, f64); 5] = [(64.0, 70.0), (32.0, 45.0), (16.0, 30.0), (8.0, 20.0), (4.0, 10.0)];

    pub fn new(seed: u64) -> Self {
        Texture { seed }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut v = 128.0;
        for (k, &(cell, amp)) in Self::OCTAVES.iter().enumerate() {
            let (fx, fy) = (x / cell, y / cell);
            let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
            let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
            let o = k as u32;
            let a = lattice(ix, iy, o, self.seed);
            let b = lattice(ix + 1, iy, o, self.seed);
            let c = lattice(ix, iy + 1, o, self.seed);
            let d = lattice(ix + 1, iy + 1, o, self.seed);
            let n = a + (b - a) * tx + (c - a) * ty + (a - b - c + d) * tx * ty;
            v += amp * (n - 0.5) * 2.0;
        }
        v
    }

    pub fn sample(&self, x: f64, y: f64) -> u8 {
        self.eval(x, y).round().clamp(0.0, 255.0) as u8
    }
}

pub fn texture_plane(width: usize, height: usize, seed: u64) -> PixelPlane {
    let t = Texture::new(seed);
    PixelPlane::from_fn(width, height, |x, y| t.sample(x as f64, y as f64))
}

/// Content moved by `(dx, dy)` pixels: `out(x, y) = in(x - dx, y - dy)` with
/// border clamping.
pub fn translate_plane(plane: &PixelPlane, dx: isize, dy: isize) -> PixelPlane {
    PixelPlane::from_fn(plane.width(), plane.height(), |x, y| {
        plane.get_clamped(x as isize - dx, y as isize - dy)
    })
}

/// Frame sampled from three textures (luma plus two chroma) through a
/// coordinate map from luma pixel position to canvas position.
fn frame_from_map(width: usize, height: usize, seed: u64, index: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> Frame {
    let (ty, tu, tv) = (Texture::new(seed), Texture::new(seed ^ 0x55), Texture::new(seed ^ 0xAA));
    let y = PixelPlane::from_fn(width, height, |x, y| {
        let (cx, cy) = map(x as f64, y as f64);
        ty.sample(cx, cy)
    });
    let chroma = |t: Texture| {
        PixelPlane::from_fn(chroma_dim(width), chroma_dim(height), |x, y| {
            let (cx, cy) = map(2.0 * x as f64 + 0.5, 2.0 * y as f64 + 0.5);
            // chroma swings are milder than luma
            (128.0 + (t.eval(cx, cy) - 128.0) * 0.35).round().clamp(0.0, 255.0) as u8
        })
    };
    Frame { y, u: chroma(tu), v: chroma(tv), display_index: index }
}

pub fn static_sequence(width: usize, height: usize, frames: usize, seed: u64) -> VideoSequence {
    let f = frame_from_map(width, height, seed, 0, |x, y| (x, y));
    let frames = (0..frames).map(|i| Frame { display_index: i, ..f.clone() }).collect();
    VideoSequence::new(frames, (25, 1)).expect("static sequence")
}

/// Global pan: content moves right by `speed` pixels per frame.
pub fn pan_sequence(width: usize, height: usize, frames: usize, speed: i64, seed: u64) -> VideoSequence {
    let frames = (0..frames)
        .map(|i| {
            let shift = (speed * i as i64) as f64;
            frame_from_map(width, height, seed, i, move |x, y| (x - shift, y))
        })
        .collect();
    VideoSequence::new(frames, (25, 1)).expect("pan sequence")
}

/// Zoom about the frame centre by `rate` relative scale per frame.
pub fn zoom_sequence(width: usize, height: usize, frames: usize, rate: f64, seed: u64) -> VideoSequence {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let frames = (0..frames)
        .map(|i| {
            let s = 1.0 / (1.0 + rate).powi(i as i32);
            frame_from_map(width, height, seed, i, move |x, y| (cx + (x - cx) * s, cy + (y - cy) * s))
        })
        .collect();
    VideoSequence::new(frames, (25, 1)).expect("zoom sequence")
}
