//! Adaptive binary range coder.
//!
//! Carry-propagating coder with a 32-bit range and 12-bit probabilities
//! (probability of a zero bit, kept in `[1, 4095]`), adapted with shift 5.
//! Bypass bits halve the range. The encoder drops the constant leading zero
//! byte of the classic layout and flushes four bytes, so every payload is
//! byte-aligned and the decoder consumes exactly the bytes written.

use crate::error::{Error, Result};

const PROB_BITS: u32 = 12;
const PROB_ONE: u16 = 1 << PROB_BITS;
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;

/// One adaptive binary context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitModel(u16);

impl Default for BitModel {
    fn default() -> Self {
        BitModel(PROB_ONE / 2)
    }
}

impl BitModel {
    /// Probability of a zero bit, in 1/4096.
    pub fn p0(self) -> u16 {
        self.0
    }

    #[inline]
    fn update(&mut self, bit: bool) {
        if bit {
            self.0 -= self.0 >> ADAPT_SHIFT;
        } else {
            self.0 += (PROB_ONE - self.0) >> ADAPT_SHIFT;
        }
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, cache_size: 1, skip_first: true, out: Vec::new() }
    }

    fn emit(&mut self, byte: u8) {
        if self.skip_first {
            debug_assert_eq!(byte, 0);
            self.skip_first = false;
        } else {
            self.out.push(byte);
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.emit(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = ((self.low as u32) << 8) as u64;
    }

    #[inline]
    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_bit(&mut self, model: &mut BitModel, bit: bool) {
        let bound = (self.range >> PROB_BITS) * model.0 as u32;
        if bit {
            self.low += bound as u64;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        model.update(bit);
        self.normalize();
    }

    pub fn encode_bypass(&mut self, bit: bool) {
        self.range >>= 1;
        if bit {
            self.low += self.range as u64;
        }
        self.normalize();
    }

    /// `count` raw bits of `value`, most significant first.
    pub fn encode_bypass_bits(&mut self, value: u32, count: u32) {
        for i in (0..count).rev() {
            self.encode_bypass((value >> i) & 1 == 1);
        }
    }

    /// Order-0 Exp-Golomb: unary prefix with one context per position
    /// (the last context repeats), bypass suffix.
    pub fn encode_ueg(&mut self, value: u32, prefix: &mut [BitModel]) {
        let v = value as u64 + 1;
        let n = 63 - v.leading_zeros();
        for i in 0..n {
            let k = (i as usize).min(prefix.len() - 1);
            self.encode_bit(&mut prefix[k], true);
        }
        let k = (n as usize).min(prefix.len() - 1);
        self.encode_bit(&mut prefix[k], false);
        self.encode_bypass_bits((v - (1 << n)) as u32, n);
    }

    /// Signed value: zero flag, magnitude - 1 as Exp-Golomb, bypass sign.
    pub fn encode_signed(&mut self, value: i32, zero: &mut BitModel, prefix: &mut [BitModel]) {
        self.encode_bit(zero, value != 0);
        if value != 0 {
            self.encode_ueg(value.unsigned_abs() - 1, prefix);
            self.encode_bypass(value < 0);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder { data, pos: 0, range: u32::MAX, code: 0 };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::Truncated(format!("range-coded payload ends after {} bytes", self.data.len())))?;
        self.pos += 1;
        Ok(b)
    }

    #[inline]
    fn normalize(&mut self) -> Result<()> {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(())
    }

    pub fn decode_bit(&mut self, model: &mut BitModel) -> Result<bool> {
        let bound = (self.range >> PROB_BITS) * model.0 as u32;
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        model.update(bit);
        self.normalize()?;
        Ok(bit)
    }

    pub fn decode_bypass(&mut self) -> Result<bool> {
        self.range >>= 1;
        let bit = if self.code >= self.range {
            self.code -= self.range;
            true
        } else {
            false
        };
        self.normalize()?;
        Ok(bit)
    }

    pub fn decode_bypass_bits(&mut self, count: u32) -> Result<u32> {
        let mut v = 0;
        for _ in 0..count {
            v = (v << 1) | self.decode_bypass()? as u32;
        }
        Ok(v)
    }

    pub fn decode_ueg(&mut self, prefix: &mut [BitModel]) -> Result<u32> {
        let mut n = 0u32;
        loop {
            let k = (n as usize).min(prefix.len() - 1);
            if !self.decode_bit(&mut prefix[k])? {
                break;
            }
            n += 1;
            if n > 32 {
                return Err(Error::Format("Exp-Golomb prefix exceeds 32 bits".into()));
            }
        }
        let suffix = self.decode_bypass_bits(n)? as u64;
        let v = (1u64 << n) + suffix - 1;
        u32::try_from(v).map_err(|_| Error::Format("Exp-Golomb value overflows".into()))
    }

    pub fn decode_signed(&mut self, zero: &mut BitModel, prefix: &mut [BitModel]) -> Result<i32> {
        if !self.decode_bit(zero)? {
            return Ok(0);
        }
        let mag = self.decode_ueg(prefix)? as i64 + 1;
        let neg = self.decode_bypass()?;
        let v = if neg { -mag } else { mag };
        i32::try_from(v).map_err(|_| Error::Format("signed value overflows".into()))
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Errors if the payload carries bytes the syntax did not consume.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Format(format!("{} trailing bytes in payload", self.data.len() - self.pos)));
        }
        Ok(())
    }
}
