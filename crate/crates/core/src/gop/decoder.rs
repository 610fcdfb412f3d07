use crate::adapt::predict_flows_at_factor;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame::{Frame, VideoSequence};
use crate::residual::{decode_intra, RangeDecoder};

use super::bitstream::{FrameHeader, Reader, SequenceHeader};
use super::plan::{sequence_plan, FrameType, Slot};
use super::side_info::decode_side_info;
use super::{frame_steps, reconstruct_b};

/// Parses the sequence header at the start of a stream.
pub fn read_sequence_header(data: &[u8]) -> Result<SequenceHeader> {
    SequenceHeader::read(&mut Reader::new(data))
}

fn decode_frame(
    header: &SequenceHeader,
    slot: &Slot,
    r: &mut Reader,
    decoded: &[Option<Frame>],
) -> Result<Frame> {
    let (w, h) = header.padded_size();
    let fh = FrameHeader::read(r, header.flags.flow_prediction)?;
    if fh.frame_type != slot.frame_type {
        return Err(Error::Conformance {
            frame: slot.display_index,
            msg: format!("frame type {} where the GOP plan expects {}", fh.frame_type.as_str(), slot.frame_type.as_str()),
        });
    }
    let payloads: Vec<&[u8]> = fh.payload_lengths.iter().map(|&n| r.bytes(n)).collect::<Result<_>>()?;
    let steps = frame_steps(header.preset, slot, fh.step_override);
    match slot.frame_type {
        FrameType::I => {
            let mut dec = RangeDecoder::new(payloads[0])?;
            let mut f = decode_intra(&mut dec, w, h, steps)?;
            dec.finish()?;
            f.display_index = slot.display_index;
            Ok(f)
        }
        FrameType::B => {
            let reference = |k: Option<usize>| {
                k.and_then(|k| decoded[k].as_ref())
                    .ok_or_else(|| Error::Internal(format!("frame {}: reference not decoded", slot.display_index)))
            };
            let (past, future) = (reference(slot.past_ref)?, reference(slot.future_ref)?);
            let flows = match fh.factor {
                Some(d) => predict_flows_at_factor(past, future, d, &header.estimator).map_err(|e| match e {
                    Error::InvalidFactor { .. } => Error::Conformance { frame: slot.display_index, msg: e.to_string() },
                    e => e,
                })?,
                None => (FlowField::zero(w, h), FlowField::zero(w, h)),
            };
            let (modes, refinement) =
                decode_side_info(payloads[0], w, h, header.alphas, header.flags.refinement, slot.display_index)?;
            reconstruct_b(past, future, &flows, &refinement, &modes, payloads[1], steps, slot.display_index)
        }
    }
}

/// Decodes a complete stream into display order, cropped to the original
/// dimensions.
pub fn decode_sequence(data: &[u8]) -> Result<VideoSequence> {
    let mut r = Reader::new(data);
    let header = SequenceHeader::read(&mut r)?;
    let mut decoded: Vec<Option<Frame>> = vec![None; header.frame_count];
    for slot in sequence_plan(header.frame_count, header.gop_size)? {
        let frame = decode_frame(&header, &slot, &mut r, &decoded).map_err(|e| match e {
            Error::Truncated(msg) => Error::TruncatedFrame { frame: slot.display_index, msg },
            e => e,
        })?;
        decoded[slot.display_index] = Some(frame);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after the last frame", r.remaining())));
    }
    let frames: Vec<Frame> = decoded.into_iter().flatten().map(|f| f.crop(header.width, header.height)).collect();
    VideoSequence::new(frames, header.fps)
}
