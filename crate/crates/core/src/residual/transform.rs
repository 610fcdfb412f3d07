//! Reversible 8x8 integer transform and the scalar quantizer.
//!
//! The 1-D transform is a three-level unnormalized Haar decomposition. For
//! inputs `(a, b)` the butterfly and its inverse are
//!
//! ```text
//! low  = a + b                high = a - b
//! a    = (low + high + 1) >> 1    b = (low - high + 1) >> 1
//! ```
//!
//! `low` and `high` of a forward butterfly always share parity, so the
//! inverse shifts discard nothing and the pair is exactly invertible. On
//! dequantized input the shifts round half up.
//!
//! Output order is `[L3, H3, H2[0], H2[1], H1[0..4]]`, low to high frequency.
//! The 2-D transform runs the 1-D transform on rows, then on columns. Band
//! gains relative to an orthonormal Haar are `sqrt(2)^levels` per axis, so
//! the DC of a block equals the block sum and fits in 16 bits.

use crate::error::{invalid, Result};

pub const N: usize = 8;
pub type Block = [[i32; N]; N];

pub const MAX_RESIDUAL: i32 = 255;

/// JPEG zig-zag scan, mapping scan index to `row * 8 + col`.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61,
    54, 47, 55, 62, 63,
];

#[inline]
fn lift(a: i32, b: i32) -> (i32, i32) {
    (a + b, a - b)
}

#[inline]
fn unlift(low: i32, high: i32) -> (i32, i32) {
    ((low + high + 1) >> 1, (low - high + 1) >> 1)
}

fn forward_1d(x: [i32; N]) -> [i32; N] {
    let mut out = [0; N];
    let mut lows = x;
    let mut len = N;
    // highs of each level land in out[len/2..len]
    while len > 1 {
        let half = len / 2;
        let mut next = [0; N];
        for k in 0..half {
            let (l, h) = lift(lows[2 * k], lows[2 * k + 1]);
            next[k] = l;
            out[half + k] = h;
        }
        lows = next;
        len = half;
    }
    out[0] = lows[0];
    out
}

fn inverse_1d(c: [i32; N]) -> [i32; N] {
    let mut lows = [0; N];
    lows[0] = c[0];
    let mut len = 1;
    while len < N {
        let mut next = [0; N];
        for k in 0..len {
            let (a, b) = unlift(lows[k], c[len + k]);
            next[2 * k] = a;
            next[2 * k + 1] = b;
        }
        lows = next;
        len *= 2;
    }
    lows
}

pub fn forward_transform(block: &Block) -> Result<Block> {
    if block.iter().flatten().any(|v| v.abs() > MAX_RESIDUAL) {
        return invalid("transform input outside [-255, 255]");
    }
    let mut rows = [[0; N]; N];
    for (r, row) in block.iter().enumerate() {
        rows[r] = forward_1d(*row);
    }
    let mut out = [[0; N]; N];
    for c in 0..N {
        let col = forward_1d(std::array::from_fn(|r| rows[r][c]));
        for r in 0..N {
            out[r][c] = col[r];
        }
    }
    Ok(out)
}

pub fn inverse_transform(coeffs: &Block) -> Block {
    let mut cols = [[0; N]; N];
    for c in 0..N {
        let col = inverse_1d(std::array::from_fn(|r| coeffs[r][c]));
        for r in 0..N {
            cols[r][c] = col[r];
        }
    }
    let mut out = [[0; N]; N];
    for r in 0..N {
        out[r] = inverse_1d(cols[r]);
    }
    out
}

/// Quantized levels in zig-zag order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedBlock(pub [i16; 64]);

impl QuantizedBlock {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&l| l == 0)
    }
}

fn check_step(step: u32) -> Result<()> {
    if step < 1 {
        return invalid("quantizer step must be at least 1");
    }
    Ok(())
}

/// `level = sign(c) * floor(|c| / step)`.
pub fn quantize(coeffs: &Block, step: u32) -> Result<QuantizedBlock> {
    check_step(step)?;
    let q = step as i32;
    let mut levels = [0i16; 64];
    for (scan, &pos) in ZIGZAG.iter().enumerate() {
        let c = coeffs[pos / N][pos % N];
        let l = c.signum() * (c.abs() / q);
        levels[scan] = l.clamp(i16::MIN as i32, i16::MAX as i32) as i16;
    }
    Ok(QuantizedBlock(levels))
}

pub fn dequantize(block: &QuantizedBlock, step: u32) -> Result<Block> {
    check_step(step)?;
    let mut out = [[0; N]; N];
    for (scan, &pos) in ZIGZAG.iter().enumerate() {
        out[pos / N][pos % N] = block.0[scan] as i32 * step as i32;
    }
    Ok(out)
}
