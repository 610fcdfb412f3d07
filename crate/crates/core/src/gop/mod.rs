//! GOP scheduling, the bitstream container and the encode/decode loops.

pub mod bitstream;
pub mod decoder;
pub mod encoder;
pub mod plan;
pub mod side_info;

pub use bitstream::{CodingFlags, FrameHeader, SequenceHeader};
pub use decoder::decode_sequence;
pub use encoder::{encode_sequence, EncodeOutput, EncoderSettings, FrameStat};
pub use plan::{build_gop_plan, sequence_plan, FrameType, GopPlan, Slot};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::Frame;
use crate::mc::{compensate, BlendModeMap, RefinementField};
use crate::residual::{decode_residual_frame, PlaneSteps, QualityPreset, RangeDecoder};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(f),
    }
}

pub(crate) fn frame_steps(preset: QualityPreset, slot: &Slot, step_override: Option<u32>) -> PlaneSteps {
    match step_override {
        Some(q) => PlaneSteps::uniform(q),
        None => preset.steps((slot.frame_type == FrameType::B).then_some(slot.ref_distance as u32)),
    }
}

/// Decoder-side reconstruction of a B frame from its decoded side info and
/// residual payload.
#[allow(clippy::too_many_arguments)]
pub(crate) fn reconstruct_b(
    past: &Frame,
    future: &Frame,
    flows: &(FlowField, FlowField),
    refinement: &RefinementField,
    modes: &BlendModeMap,
    residual: &[u8],
    steps: PlaneSteps,
    display_index: usize,
) -> Result<Frame> {
    let mut pred = compensate(past, future, &flows.0, &flows.1, refinement, modes)?;
    pred.display_index = display_index;
    let mut dec = RangeDecoder::new(residual)?;
    let frame = decode_residual_frame(&mut dec, &pred, steps)?;
    dec.finish()?;
    Ok(frame)
}
