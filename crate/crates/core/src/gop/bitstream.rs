//! Container syntax: sequence header, frame headers and LEB128 varints.

use crate::adapt::DownsampleFactor;
use crate::error::{Error, Result};
use crate::flow::EstimatorConfig;
use crate::mc::{Alphas, REFINE_LEVELS};
use crate::residual::QualityPreset;

use super::plan::{check_gop_size, FrameType};

pub const MAGIC: &[u8; 4] = b"MABC";
pub const VERSION: u8 = 1;

pub fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Byte cursor; running out of input yields [`Error::Truncated`].
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn u8(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or_else(|| Error::Truncated(format!("need a byte at offset {}", self.pos)))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated(format!("need {n} bytes at offset {}, have {}", self.pos, self.remaining())));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Format("varint longer than 64 bits".into()))
    }

    fn varint_u32(&mut self, what: &str) -> Result<u32> {
        u32::try_from(self.varint()?).map_err(|_| Error::Format(format!("{what} exceeds 32 bits")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodingFlags {
    pub adaptive_downsampling: bool,
    pub flow_prediction: bool,
    pub refinement: bool,
}

impl Default for CodingFlags {
    fn default() -> Self {
        CodingFlags { adaptive_downsampling: true, flow_prediction: true, refinement: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceHeader {
    /// Dimensions before padding.
    pub width: usize,
    pub height: usize,
    pub fps: (u32, u32),
    pub frame_count: usize,
    pub gop_size: usize,
    pub estimator: EstimatorConfig,
    pub alphas: Alphas,
    pub preset: QualityPreset,
    pub flags: CodingFlags,
}

impl SequenceHeader {
    pub fn padded_size(&self) -> (usize, usize) {
        (self.width.next_multiple_of(16), self.height.next_multiple_of(16))
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for v in [self.width as u64, self.height as u64, self.fps.0 as u64, self.fps.1 as u64] {
            write_varint(out, v);
        }
        write_varint(out, self.frame_count as u64);
        write_varint(out, self.gop_size as u64);
        write_varint(out, self.estimator.block_size as u64);
        write_varint(out, self.estimator.search_radius as u64);
        let f = &self.flags;
        out.push(
            f.adaptive_downsampling as u8
                | (f.flow_prediction as u8) << 1
                | (f.refinement as u8) << 2
                | (self.estimator.halfpel_refine as u8) << 3,
        );
        for a in self.alphas.0 {
            write_varint(out, a as u64);
        }
        out.push(self.preset.index());
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        let magic = r.bytes(4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:02x?}")));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let width = r.varint_u32("width")? as usize;
        let height = r.varint_u32("height")? as usize;
        if width == 0 || height == 0 {
            return Err(Error::Format(format!("zero dimension {width}x{height}")));
        }
        let fps = (r.varint_u32("fps numerator")?, r.varint_u32("fps denominator")?);
        let frame_count = r.varint_u32("frame count")? as usize;
        if frame_count == 0 {
            return Err(Error::Format("zero frame count".into()));
        }
        let gop_size = r.varint_u32("GOP size")? as usize;
        check_gop_size(gop_size).map_err(|e| Error::Format(e.to_string()))?;
        let block_size = r.varint_u32("block size")? as usize;
        let search_radius = r.varint_u32("search radius")?;
        let bits = r.u8()?;
        if bits >> 4 != 0 {
            return Err(Error::Format(format!("reserved flag bits set: {bits:#04x}")));
        }
        let estimator = EstimatorConfig { block_size, search_radius, halfpel_refine: bits & 8 != 0 };
        estimator.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut alphas = [0u32; REFINE_LEVELS];
        for a in alphas.iter_mut() {
            *a = r.varint_u32("alpha")?;
            if *a > 64 * 8 {
                return Err(Error::Format(format!("alpha {a} out of range")));
            }
        }
        let preset = QualityPreset::new(r.u8()?).map_err(|e| Error::Format(e.to_string()))?;
        Ok(SequenceHeader {
            width,
            height,
            fps,
            frame_count,
            gop_size,
            estimator,
            alphas: Alphas(alphas),
            preset,
            flags: CodingFlags {
                adaptive_downsampling: bits & 1 != 0,
                flow_prediction: bits & 2 != 0,
                refinement: bits & 4 != 0,
            },
        })
    }
}

/// Per-frame header. The leading byte packs, from the most significant bit:
/// frame type (0 = I, 1 = B), the 2-bit factor code when present, and the
/// step-override flag; remaining bits are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub factor: Option<DownsampleFactor>,
    pub step_override: Option<u32>,
    /// Payload byte lengths: one for I frames, side info then residual for B.
    pub payload_lengths: Vec<usize>,
}

impl FrameHeader {
    pub fn payload_count(frame_type: FrameType) -> usize {
        match frame_type {
            FrameType::I => 1,
            FrameType::B => 2,
        }
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        let mut bits = 0u8;
        let mut n = 0;
        let mut put = |v: u8, width: u32| {
            bits |= v << (8 - n - width);
            n += width;
        };
        put((self.frame_type == FrameType::B) as u8, 1);
        if let Some(d) = self.factor {
            put(d.code(), 2);
        }
        put(self.step_override.is_some() as u8, 1);
        out.push(bits);
        if let Some(q) = self.step_override {
            write_varint(out, q as u64);
        }
        for &len in &self.payload_lengths {
            write_varint(out, len as u64);
        }
    }

    /// `factor_present` says whether B frames carry the factor code.
    pub fn read(r: &mut Reader, factor_present: bool) -> Result<Self> {
        let bits = r.u8()?;
        let mut n = 0;
        let mut take = |width: u32| {
            let v = (bits >> (8 - n - width)) & ((1 << width) - 1);
            n += width;
            v
        };
        let frame_type = if take(1) == 1 { FrameType::B } else { FrameType::I };
        let factor = if frame_type == FrameType::B && factor_present {
            Some(DownsampleFactor::from_code(take(2))?)
        } else {
            None
        };
        let has_override = take(1) == 1;
        if bits & ((1u16 << (8 - n)) - 1) as u8 != 0 {
            return Err(Error::Format(format!("nonzero padding bits in frame header {bits:#04x}")));
        }
        let step_override = if has_override {
            let q = r.varint_u32("step override")?;
            if q == 0 {
                return Err(Error::Format("zero quantizer step".into()));
            }
            Some(q)
        } else {
            None
        };
        let payload_lengths = (0..Self::payload_count(frame_type))
            .map(|_| r.varint().map(|v| v as usize))
            .collect::<Result<_>>()?;
        Ok(FrameHeader { frame_type, factor, step_override, payload_lengths })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn varint_examples() {
        let mut out = vec![];
        write_varint(&mut out, 0);
        write_varint(&mut out, 127);
        write_varint(&mut out, 128);
        write_varint(&mut out, 300);
        assert_eq!(out, vec![0, 0x7f, 0x80, 0x01, 0xac, 0x02]);
        let mut r = Reader::new(&out);
        for v in [0, 127, 128, 300] {
            assert_eq!(r.varint().unwrap(), v);
        }
        assert!(matches!(r.varint(), Err(Error::Truncated(_))));
    }

    fn header() -> SequenceHeader {
        SequenceHeader {
            width: 100,
            height: 36,
            fps: (30000, 1001),
            frame_count: 17,
            gop_size: 16,
            estimator: EstimatorConfig::default(),
            alphas: Alphas::default(),
            preset: QualityPreset::new(2).unwrap(),
            flags: CodingFlags { adaptive_downsampling: false, flow_prediction: true, refinement: true },
        }
    }

    #[test]
    fn sequence_header_roundtrip() {
        let h = header();
        let mut out = vec![];
        h.write(&mut out);
        assert_eq!(&out[..5], b"MABC\x01");
        let mut r = Reader::new(&out);
        assert_eq!(SequenceHeader::read(&mut r).unwrap(), h);
        assert_eq!(r.remaining(), 0);
        assert_eq!(h.padded_size(), (112, 48));
    }

    #[test]
    fn sequence_header_rejects_bad_magic_and_version() {
        let mut out = vec![];
        header().write(&mut out);
        let mut bad = out.clone();
        bad[0] = b'X';
        assert!(matches!(SequenceHeader::read(&mut Reader::new(&bad)), Err(Error::Format(_))));
        let mut bad = out.clone();
        bad[4] = 2;
        assert!(matches!(SequenceHeader::read(&mut Reader::new(&bad)), Err(Error::Format(_))));
        assert!(matches!(SequenceHeader::read(&mut Reader::new(&out[..7])), Err(Error::Truncated(_))));
    }

    #[test]
    fn frame_header_bits() {
        let h = FrameHeader {
            frame_type: FrameType::B,
            factor: Some(DownsampleFactor::from_value(4).unwrap()),
            step_override: None,
            payload_lengths: vec![5, 300],
        };
        let mut out = vec![];
        h.write(&mut out);
        // 1 | 10 | 0 | 0000
        assert_eq!(out, vec![0b1100_0000, 5, 0xac, 0x02]);
        assert_eq!(FrameHeader::read(&mut Reader::new(&out), true).unwrap(), h);

        let h = FrameHeader { frame_type: FrameType::B, factor: None, step_override: Some(1), payload_lengths: vec![1, 2] };
        let mut out = vec![];
        h.write(&mut out);
        assert_eq!(out, vec![0b1100_0000, 1, 1, 2]);
        assert_eq!(FrameHeader::read(&mut Reader::new(&out), false).unwrap(), h);

        let h = FrameHeader { frame_type: FrameType::I, factor: None, step_override: None, payload_lengths: vec![9] };
        let mut out = vec![];
        h.write(&mut out);
        assert_eq!(out, vec![0, 9]);
        assert_eq!(FrameHeader::read(&mut Reader::new(&out), true).unwrap(), h);
    }

    #[test]
    fn frame_header_rejects_padding_bits() {
        assert!(matches!(FrameHeader::read(&mut Reader::new(&[0b0000_0001, 0]), true), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn varint_roundtrip(v in any::<u64>()) {
            let mut out = vec![];
            write_varint(&mut out, v);
            prop_assert!(out.len() <= 10);
            let mut r = Reader::new(&out);
            prop_assert_eq!(r.varint().unwrap(), v);
            prop_assert_eq!(r.remaining(), 0);
        }

        #[test]
        fn frame_header_roundtrip(b in any::<bool>(), fp in any::<bool>(), code in 0u8..4, ov in proptest::option::of(1u32..1000), lens in proptest::collection::vec(0usize..100000, 2)) {
            let frame_type = if b { FrameType::B } else { FrameType::I };
            let factor = (b && fp).then(|| DownsampleFactor::from_code(code).unwrap());
            let h = FrameHeader { frame_type, factor, step_override: ov, payload_lengths: lens[..FrameHeader::payload_count(frame_type)].to_vec() };
            let mut out = vec![];
            h.write(&mut out);
            prop_assert_eq!(FrameHeader::read(&mut Reader::new(&out), fp).unwrap(), h);
        }
    }
}
