//! Planar 8-bit 4:2:0 pictures and the pixel-level primitives shared by the
//! rest of the codec.

use crate::adapt::DownsampleFactor;
use crate::error::{invalid, Result};

/// PSNR reported for a zero-error comparison.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Clone, PartialEq, Eq)]
pub struct PixelPlane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl std::fmt::Debug for PixelPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PixelPlane({}x{})", self.width, self.height)
    }
}

impl PixelPlane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("plane dimensions must be nonzero, got {width}x{height}"));
        }
        if samples.len() != width * height {
            return invalid(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                samples.len()
            ));
        }
        Ok(PixelPlane { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be nonzero");
        PixelPlane { width, height, samples: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be nonzero");
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        PixelPlane { width, height, samples }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.samples[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the valid rectangle.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.samples[cy * self.width + cx]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    /// Extends the plane to `width`x`height` by replicating the last column and row.
    pub fn pad_to(&self, width: usize, height: usize) -> PixelPlane {
        assert!(width >= self.width && height >= self.height);
        PixelPlane::from_fn(width, height, |x, y| {
            self.get(x.min(self.width - 1), y.min(self.height - 1))
        })
    }

    pub fn crop(&self, width: usize, height: usize) -> PixelPlane {
        assert!(width <= self.width && height <= self.height && width > 0 && height > 0);
        PixelPlane::from_fn(width, height, |x, y| self.get(x, y))
    }

    pub fn sse(&self, other: &PixelPlane) -> Result<u64> {
        if self.width != other.width || self.height != other.height {
            return invalid(format!(
                "plane size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            ));
        }
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                (d * d) as u64
            })
            .sum())
    }
}

/// Chroma dimension for a 4:2:0 luma dimension.
#[inline]
pub fn chroma_dim(luma: usize) -> usize {
    luma.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub y: PixelPlane,
    pub u: PixelPlane,
    pub v: PixelPlane,
    pub display_index: usize,
}

impl Frame {
    pub fn new(y: PixelPlane, u: PixelPlane, v: PixelPlane, display_index: usize) -> Result<Self> {
        let (cw, ch) = (chroma_dim(y.width()), chroma_dim(y.height()));
        for (name, p) in [("u", &u), ("v", &v)] {
            if p.width() != cw || p.height() != ch {
                return invalid(format!(
                    "{name} plane is {}x{}, expected {cw}x{ch} for 4:2:0",
                    p.width(),
                    p.height()
                ));
            }
        }
        Ok(Frame { y, u, v, display_index })
    }

    pub fn filled(width: usize, height: usize, luma: u8, chroma: u8) -> Self {
        let (cw, ch) = (chroma_dim(width), chroma_dim(height));
        Frame {
            y: PixelPlane::filled(width, height, luma),
            u: PixelPlane::filled(cw, ch, chroma),
            v: PixelPlane::filled(cw, ch, chroma),
            display_index: 0,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.y.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y.height()
    }

    pub fn planes(&self) -> [&PixelPlane; 3] {
        [&self.y, &self.u, &self.v]
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        self.width() == other.width() && self.height() == other.height()
    }

    pub fn pad_to(&self, width: usize, height: usize) -> Frame {
        Frame {
            y: self.y.pad_to(width, height),
            u: self.u.pad_to(chroma_dim(width), chroma_dim(height)),
            v: self.v.pad_to(chroma_dim(width), chroma_dim(height)),
            display_index: self.display_index,
        }
    }

    pub fn crop(&self, width: usize, height: usize) -> Frame {
        Frame {
            y: self.y.crop(width, height),
            u: self.u.crop(chroma_dim(width), chroma_dim(height)),
            v: self.v.crop(chroma_dim(width), chroma_dim(height)),
            display_index: self.display_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoSequence {
    pub frames: Vec<Frame>,
    pub width: usize,
    pub height: usize,
    /// Frame rate as (numerator, denominator).
    pub fps: (u32, u32),
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: (u32, u32)) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| crate::Error::InvalidInput("sequence has no frames".into()))?;
        let (width, height) = (first.width(), first.height());
        if let Some(f) = frames.iter().find(|f| f.width() != width || f.height() != height) {
            return invalid(format!(
                "frame {} is {}x{}, sequence is {width}x{height}",
                f.display_index,
                f.width(),
                f.height()
            ));
        }
        if fps.0 == 0 || fps.1 == 0 {
            return invalid("frame rate terms must be nonzero");
        }
        Ok(VideoSequence { frames, width, height, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Reduces a plane by `factor` in each axis, each output sample being the
/// round-half-up mean of its `d`x`d` source block. Trailing rows and columns
/// that do not fill a whole block are dropped.
pub fn downsample_plane(plane: &PixelPlane, factor: DownsampleFactor) -> Result<PixelPlane> {
    let d = factor.value() as usize;
    if plane.width() < d || plane.height() < d {
        return invalid(format!(
            "cannot downsample {}x{} by {d}",
            plane.width(),
            plane.height()
        ));
    }
    if d == 1 {
        return Ok(plane.clone());
    }
    let (w, h) = (plane.width() / d, plane.height() / d);
    let area = (d * d) as u32;
    let mut out = Vec::with_capacity(w * h);
    for by in 0..h {
        for bx in 0..w {
            let mut sum = 0u32;
            for y in by * d..(by + 1) * d {
                sum += plane.row(y)[bx * d..(bx + 1) * d].iter().map(|&s| s as u32).sum::<u32>();
            }
            out.push(((sum + area / 2) / area) as u8);
        }
    }
    PixelPlane::new(w, h, out)
}

/// PSNR in dB for a given sum of squared errors over `count` samples, capped
/// at [`PSNR_CAP`].
pub fn psnr_from_sse(sse: u64, count: usize) -> f64 {
    if sse == 0 {
        return PSNR_CAP;
    }
    let v = 10.0 * (255.0f64 * 255.0 * count as f64 / sse as f64).log10();
    v.min(PSNR_CAP)
}

pub fn plane_psnr(reference: &PixelPlane, test: &PixelPlane) -> Result<f64> {
    let sse = reference.sse(test)?;
    Ok(psnr_from_sse(sse, reference.samples().len()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsnrReport {
    pub y: f64,
    pub u: f64,
    pub v: f64,
    /// `(6Y + U + V) / 8`.
    pub combined: f64,
}

pub fn psnr(reference: &Frame, test: &Frame) -> Result<PsnrReport> {
    if !reference.same_geometry(test) {
        return invalid(format!(
            "frame size mismatch: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        ));
    }
    let y = plane_psnr(&reference.y, &test.y)?;
    let u = plane_psnr(&reference.u, &test.u)?;
    let v = plane_psnr(&reference.v, &test.v)?;
    Ok(PsnrReport { y, u, v, combined: (6.0 * y + u + v) / 8.0 })
}
