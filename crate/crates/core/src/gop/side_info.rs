//! Side-information payload of a B frame: per-block blend modes followed by
//! the refinement corrections of levels 2, 1, 0 in units of each level's
//! step.

use crate::error::{Error, Result};
use crate::flow::MotionVector;
use crate::mc::{level_grid, Alphas, BlendMode, BlendModeMap, RefinementField, REFINE_LEVELS};
use crate::residual::{BitModel, RangeDecoder, RangeEncoder};

#[derive(Default)]
struct Contexts {
    /// Non-average flag, by whether the left block was non-average.
    single: [BitModel; 2],
    /// Future-only versus past-only.
    which: BitModel,
    zero: [[BitModel; 2]; REFINE_LEVELS],
    prefix: [[BitModel; 6]; REFINE_LEVELS],
}

pub fn encode_side_info(modes: &BlendModeMap, refinement: Option<&RefinementField>) -> Vec<u8> {
    let mut enc = RangeEncoder::new();
    let mut ctx = Contexts::default();
    let (bw, _) = modes.grid();
    for (k, &m) in modes.modes().iter().enumerate() {
        let left = k % bw != 0 && modes.modes()[k - 1] != BlendMode::Average;
        enc.encode_bit(&mut ctx.single[left as usize], m != BlendMode::Average);
        if m != BlendMode::Average {
            enc.encode_bit(&mut ctx.which, m == BlendMode::FutureOnly);
        }
    }
    if let Some(field) = refinement {
        let alphas = field.alphas();
        for j in (0..REFINE_LEVELS).rev() {
            if alphas.max_steps(j) == 0 {
                continue;
            }
            let step = Alphas::step(j);
            for c in field.level(j) {
                for (n, v) in [c.dx, c.dy].into_iter().enumerate() {
                    enc.encode_signed(v / step, &mut ctx.zero[j][n], &mut ctx.prefix[j]);
                }
            }
        }
    }
    enc.finish()
}

/// Decodes a side-info payload for a `width`x`height` frame. Corrections
/// outside the signaled bounds are reported as conformance errors against
/// `frame`.
pub fn decode_side_info(
    data: &[u8],
    width: usize,
    height: usize,
    alphas: Alphas,
    refinement_enabled: bool,
    frame: usize,
) -> Result<(BlendModeMap, RefinementField)> {
    let mut dec = RangeDecoder::new(data)?;
    let mut ctx = Contexts::default();
    let (bw, bh) = level_grid(width, height, 0);
    let mut modes = Vec::with_capacity(bw * bh);
    for k in 0..bw * bh {
        let left = k % bw != 0 && modes[k - 1] != BlendMode::Average;
        let m = if dec.decode_bit(&mut ctx.single[left as usize])? {
            if dec.decode_bit(&mut ctx.which)? {
                BlendMode::FutureOnly
            } else {
                BlendMode::PastOnly
            }
        } else {
            BlendMode::Average
        };
        modes.push(m);
    }
    let modes = BlendModeMap::new(width, height, modes)?;
    let conformance = |msg: String| Error::Conformance { frame, msg };
    let refinement = if refinement_enabled {
        let mut levels: [Vec<MotionVector>; REFINE_LEVELS] = Default::default();
        for j in (0..REFINE_LEVELS).rev() {
            let (gw, gh) = level_grid(width, height, j);
            if alphas.max_steps(j) == 0 {
                levels[j] = vec![MotionVector::ZERO; gw * gh];
                continue;
            }
            let step = Alphas::step(j);
            let mut level = Vec::with_capacity(gw * gh);
            for _ in 0..gw * gh {
                let mut comp = [0i32; 2];
                for (n, c) in comp.iter_mut().enumerate() {
                    let v = dec.decode_signed(&mut ctx.zero[j][n], &mut ctx.prefix[j])?;
                    *c = v.checked_mul(step).ok_or_else(|| conformance(format!("level {j} correction {v} overflows")))?;
                }
                level.push(MotionVector::new(comp[0], comp[1]));
            }
            levels[j] = level;
        }
        RefinementField::new(width, height, alphas, levels).map_err(|e| conformance(e.to_string()))?
    } else {
        RefinementField::zero(width, height, alphas)
    };
    dec.finish()?;
    Ok((modes, refinement))
}
