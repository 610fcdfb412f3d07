use log::debug;

use crate::adapt::{adapt_factor, derive_flow_pyramid, predict_flows_at_factor, DownsampleFactor};
use crate::error::{invalid, Error, Result};
use crate::flow::{EstimatorConfig, FlowField};
use crate::frame::{psnr, Frame, PsnrReport, VideoSequence};
use crate::mc::{choose_blend_modes, compensate, refine_offsets, warp_references, Alphas, ImagePyramid, RefinementField};
use crate::residual::{code_intra, code_residual_frame, decode_intra, QualityPreset, RangeDecoder, RangeEncoder};

use super::bitstream::{CodingFlags, FrameHeader, SequenceHeader};
use super::plan::{check_gop_size, sequence_plan, FrameType, Slot};
use super::side_info::{decode_side_info, encode_side_info};
use super::{frame_steps, reconstruct_b, with_threads};

#[derive(Clone, Debug)]
pub struct EncoderSettings {
    pub preset: QualityPreset,
    pub gop_size: usize,
    pub estimator: EstimatorConfig,
    pub alphas: Alphas,
    pub flags: CodingFlags,
    /// Factor used for every B frame when adaptive downsampling is off.
    pub fixed_d: DownsampleFactor,
    /// Replaces the preset's steps for all frames and planes.
    pub step_override: Option<u32>,
    pub threads: Option<usize>,
    /// Re-decode every frame's payloads and compare with the local
    /// reconstruction.
    pub verify: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            preset: QualityPreset::new(0).expect("preset 0"),
            gop_size: 16,
            estimator: EstimatorConfig::default(),
            alphas: Alphas::default(),
            flags: CodingFlags::default(),
            fixed_d: DownsampleFactor::ONE,
            step_override: None,
            threads: None,
            verify: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameStat {
    pub display_index: usize,
    pub coding_order: usize,
    pub frame_type: FrameType,
    pub ref_distance: usize,
    pub factor: Option<DownsampleFactor>,
    /// Frame header plus payload bits.
    pub bits: u64,
    /// Local reconstruction against the source, on the unpadded area.
    pub psnr: PsnrReport,
}

#[derive(Clone, Debug)]
pub struct EncodeOutput {
    pub bitstream: Vec<u8>,
    pub stats: Vec<FrameStat>,
    /// Encoder-side reconstruction in display order, cropped.
    pub reconstruction: VideoSequence,
}

impl EncodeOutput {
    pub fn total_bits(&self) -> u64 {
        self.bitstream.len() as u64 * 8
    }

    pub fn bpp(&self) -> f64 {
        let r = &self.reconstruction;
        self.total_bits() as f64 / (r.width * r.height * r.len()) as f64
    }
}

struct CodedFrame {
    header: FrameHeader,
    payloads: Vec<Vec<u8>>,
    recon: Frame,
}

struct Encoder<'a> {
    settings: &'a EncoderSettings,
    header: &'a SequenceHeader,
}

impl Encoder<'_> {
    fn check_closed_loop(&self, slot: &Slot, recon: &Frame, decoded: Result<Frame>) -> Result<()> {
        let decoded = decoded.map_err(|e| Error::Internal(format!("frame {}: re-decoding failed: {e}", slot.display_index)))?;
        if decoded.planes() != recon.planes() {
            let diff = recon.y.samples().iter().zip(decoded.y.samples()).position(|(a, b)| a != b);
            return Err(Error::Internal(format!(
                "frame {}: decoder reconstruction diverges from encoder (first luma mismatch at {diff:?})",
                slot.display_index
            )));
        }
        Ok(())
    }

    fn encode_i(&self, slot: &Slot, cur: &Frame) -> Result<CodedFrame> {
        let steps = frame_steps(self.settings.preset, slot, self.settings.step_override);
        let mut enc = RangeEncoder::new();
        let mut recon = code_intra(cur, steps, &mut enc)?;
        recon.display_index = slot.display_index;
        let payload = enc.finish();
        if self.settings.verify {
            let decoded = RangeDecoder::new(&payload).and_then(|mut dec| {
                let f = decode_intra(&mut dec, cur.width(), cur.height(), steps)?;
                dec.finish()?;
                Ok(f)
            });
            self.check_closed_loop(slot, &recon, decoded)?;
        }
        Ok(CodedFrame {
            header: FrameHeader {
                frame_type: FrameType::I,
                factor: None,
                step_override: self.settings.step_override,
                payload_lengths: vec![payload.len()],
            },
            payloads: vec![payload],
            recon,
        })
    }

    fn flows(&self, cur: &Frame, past: &Frame, future: &Frame) -> Result<(Option<DownsampleFactor>, (FlowField, FlowField))> {
        let flags = &self.settings.flags;
        let cfg = &self.settings.estimator;
        if !flags.flow_prediction {
            let (w, h) = (cur.width(), cur.height());
            return Ok((None, (FlowField::zero(w, h), FlowField::zero(w, h))));
        }
        if flags.adaptive_downsampling {
            let a = adapt_factor(&cur.y, &past.y, &future.y, cfg)?;
            debug!("frame {}: factor PSNRs {:?}", cur.display_index, a.report.psnr_per_factor);
            Ok((Some(a.report.chosen), a.flows))
        } else {
            let d = self.settings.fixed_d;
            Ok((Some(d), predict_flows_at_factor(past, future, d, cfg)?))
        }
    }

    fn encode_b(&self, slot: &Slot, cur: &Frame, past: &Frame, future: &Frame) -> Result<CodedFrame> {
        let (factor, flows) = self.flows(cur, past, future)?;
        let (w, h) = (cur.width(), cur.height());
        let alphas = self.header.alphas;
        let refinement = if self.settings.flags.refinement {
            let (cp, pp, fp) = (ImagePyramid::build(&cur.y)?, ImagePyramid::build(&past.y)?, ImagePyramid::build(&future.y)?);
            let (fa, fb) = (derive_flow_pyramid(&flows.0)?, derive_flow_pyramid(&flows.1)?);
            refine_offsets(&cp, &pp, &fp, &fa, &fb, alphas)?
        } else {
            RefinementField::zero(w, h, alphas)
        };
        let (wp, wf) = warp_references(&past.y, &future.y, &flows.0, &flows.1, &refinement)?;
        let modes = choose_blend_modes(&cur.y, &wp, &wf)?;
        let pred = compensate(past, future, &flows.0, &flows.1, &refinement, &modes)?;

        let steps = frame_steps(self.settings.preset, slot, self.settings.step_override);
        let side = encode_side_info(&modes, self.settings.flags.refinement.then_some(&refinement));
        let mut enc = RangeEncoder::new();
        let mut recon = code_residual_frame(cur, &pred, steps, &mut enc)?;
        recon.display_index = slot.display_index;
        let residual = enc.finish();

        if self.settings.verify {
            let decoded = decode_side_info(&side, w, h, alphas, self.settings.flags.refinement, slot.display_index)
                .and_then(|(m, r)| reconstruct_b(past, future, &flows, &r, &m, &residual, steps, slot.display_index));
            self.check_closed_loop(slot, &recon, decoded)?;
        }
        Ok(CodedFrame {
            header: FrameHeader {
                frame_type: FrameType::B,
                factor,
                step_override: self.settings.step_override,
                payload_lengths: vec![side.len(), residual.len()],
            },
            payloads: vec![side, residual],
            recon,
        })
    }
}

fn validate(seq: &VideoSequence, settings: &EncoderSettings) -> Result<()> {
    if seq.is_empty() {
        return invalid("sequence has no frames");
    }
    check_gop_size(settings.gop_size)?;
    settings.estimator.validate()?;
    if settings.step_override == Some(0) {
        return invalid("quantizer step override must be at least 1");
    }
    if settings.flags.adaptive_downsampling && !settings.flags.flow_prediction {
        debug!("adaptive downsampling has no effect without flow prediction");
    }
    Ok(())
}

pub fn encode_sequence(seq: &VideoSequence, settings: &EncoderSettings) -> Result<EncodeOutput> {
    validate(seq, settings)?;
    with_threads(settings.threads, || encode_inner(seq, settings))
}

fn encode_inner(seq: &VideoSequence, settings: &EncoderSettings) -> Result<EncodeOutput> {
    let header = SequenceHeader {
        width: seq.width,
        height: seq.height,
        fps: seq.fps,
        frame_count: seq.len(),
        gop_size: settings.gop_size,
        estimator: settings.estimator,
        alphas: settings.alphas,
        preset: settings.preset,
        flags: settings.flags,
    };
    let (pw, ph) = header.padded_size();
    let mut out = Vec::new();
    header.write(&mut out);
    let encoder = Encoder { settings, header: &header };

    let mut decoded: Vec<Option<Frame>> = vec![None; seq.len()];
    let mut stats = Vec::with_capacity(seq.len());
    for slot in sequence_plan(seq.len(), settings.gop_size)? {
        let mut cur = seq.frames[slot.display_index].pad_to(pw, ph);
        cur.display_index = slot.display_index;
        let coded = match slot.frame_type {
            FrameType::I => encoder.encode_i(&slot, &cur)?,
            FrameType::B => {
                let reference = |r: Option<usize>| {
                    r.and_then(|k| decoded[k].as_ref())
                        .ok_or_else(|| Error::Internal(format!("frame {}: reference not decoded", slot.display_index)))
                };
                encoder.encode_b(&slot, &cur, reference(slot.past_ref)?, reference(slot.future_ref)?)?
            }
        };
        let start = out.len();
        coded.header.write(&mut out);
        for p in &coded.payloads {
            out.extend_from_slice(p);
        }
        let report = psnr(&seq.frames[slot.display_index], &coded.recon.crop(seq.width, seq.height))?;
        stats.push(FrameStat {
            display_index: slot.display_index,
            coding_order: slot.coding_order,
            frame_type: slot.frame_type,
            ref_distance: slot.ref_distance,
            factor: coded.header.factor,
            bits: (out.len() - start) as u64 * 8,
            psnr: report,
        });
        debug!(
            "frame {} {} i={} d={:?} bits={}",
            slot.display_index,
            slot.frame_type.as_str(),
            slot.ref_distance,
            coded.header.factor.map(|d| d.value()),
            (out.len() - start) * 8
        );
        decoded[slot.display_index] = Some(coded.recon);
    }
    let frames = decoded
        .into_iter()
        .map(|f| f.map(|f| f.crop(seq.width, seq.height)).ok_or_else(|| Error::Internal("frame left uncoded".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodeOutput { bitstream: out, stats, reconstruction: VideoSequence::new(frames, seq.fps)? })
}
