//! Residual and intra coding on top of an integer transform and an adaptive
//! binary range coder.

pub mod plane;
pub mod range_coder;
pub mod transform;

use crate::error::{invalid, Result};

pub use plane::{
    code_intra, code_plane, code_residual_frame, decode_intra, decode_plane, decode_residual_frame, PlaneClass,
    PlaneSteps, ResidualContexts, ResidualPlane,
};
pub use range_coder::{BitModel, RangeDecoder, RangeEncoder};
pub use transform::{dequantize, forward_transform, inverse_transform, quantize, QuantizedBlock};

/// Base luma steps of the four presets.
pub const PRESET_STEPS: [u32; 4] = [4, 8, 16, 32];

/// Step multipliers in tenths: intra, then reference distance 8+, 4, 2, 1.
const MULT_INTRA: u32 = 8;
const MULT_BY_LEVEL: [(u32, u32); 4] = [(8, 10), (4, 11), (2, 12), (1, 13)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QualityPreset {
    index: u8,
}

impl QualityPreset {
    pub fn new(index: u8) -> Result<Self> {
        if index as usize >= PRESET_STEPS.len() {
            return invalid(format!("quality preset {index} outside 0..=3"));
        }
        Ok(QualityPreset { index })
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn base_step(&self) -> u32 {
        PRESET_STEPS[self.index as usize]
    }

    fn scaled(&self, tenths: u32) -> u32 {
        ((self.base_step() * tenths + 5) / 10).max(1)
    }

    /// Multiplier in tenths for a B frame at reference distance `i`.
    pub fn b_multiplier(i: u32) -> u32 {
        MULT_BY_LEVEL.iter().find(|&&(lvl, _)| i >= lvl).map_or(13, |&(_, m)| m)
    }

    /// Steps for an I frame (`distance = None`) or a B frame at distance `i`.
    pub fn steps(&self, distance: Option<u32>) -> PlaneSteps {
        let luma = self.scaled(distance.map_or(MULT_INTRA, Self::b_multiplier));
        PlaneSteps { luma, chroma: chroma_step(luma) }
    }
}

/// `ceil(1.25 * luma)`.
pub fn chroma_step(luma: u32) -> u32 {
    (5 * luma).div_ceil(4)
}
