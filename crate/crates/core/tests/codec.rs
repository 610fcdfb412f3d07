use mabc::adapt::DownsampleFactor;
use mabc::frame::{psnr, VideoSequence};
use mabc::gop::{decode_sequence, encode_sequence, CodingFlags, EncoderSettings, FrameType};
use mabc::residual::QualityPreset;
use mabc::synth::{pan_sequence, static_sequence, zoom_sequence};
use mabc::Error;

fn settings(preset: u8) -> EncoderSettings {
    EncoderSettings { preset: QualityPreset::new(preset).unwrap(), ..Default::default() }
}

fn roundtrip(seq: &VideoSequence, s: &EncoderSettings) -> mabc::gop::EncodeOutput {
    let out = encode_sequence(seq, s).unwrap();
    let dec = decode_sequence(&out.bitstream).unwrap();
    assert_eq!(dec, out.reconstruction);
    out
}

#[test]
fn static_sequence_decodes_to_encoder_reconstruction() {
    let seq = static_sequence(64, 64, 17, 1);
    let out = roundtrip(&seq, &settings(0));
    for st in out.stats.iter().filter(|s| s.frame_type == FrameType::B) {
        assert_eq!(st.factor, Some(DownsampleFactor::ONE), "frame {}", st.display_index);
    }
    let i_bits = out.stats[0].bits;
    for st in out.stats.iter().filter(|s| s.frame_type == FrameType::B) {
        assert!(st.bits < i_bits / 4, "frame {} costs {} bits, I costs {i_bits}", st.display_index, st.bits);
    }
    for (a, b) in seq.frames.iter().zip(&out.reconstruction.frames) {
        assert!(psnr(a, b).unwrap().combined >= 48.0);
    }
}

#[test]
fn odd_dimensions_are_padded_and_cropped() {
    let seq = pan_sequence(50, 38, 6, 2, 3);
    let out = roundtrip(&seq, &EncoderSettings { gop_size: 4, ..settings(1) });
    assert_eq!((out.reconstruction.width, out.reconstruction.height), (50, 38));
    assert_eq!(out.reconstruction.len(), 6);
}

#[test]
fn no_flow_prediction_carries_no_factor() {
    let seq = pan_sequence(64, 64, 9, 4, 5);
    let s = EncoderSettings {
        gop_size: 8,
        flags: CodingFlags { flow_prediction: false, ..Default::default() },
        ..settings(1)
    };
    let out = roundtrip(&seq, &s);
    assert!(out.stats.iter().all(|st| st.factor.is_none()));
}

#[test]
fn lossless_override_reproduces_input() {
    let seq = zoom_sequence(48, 32, 5, 0.02, 9);
    let out = roundtrip(&seq, &EncoderSettings { gop_size: 4, step_override: Some(1), ..settings(0) });
    assert_eq!(out.reconstruction.frames, seq.frames);
}

#[test]
fn fixed_factor_and_refinement_off() {
    let seq = pan_sequence(128, 128, 5, 6, 2);
    let s = EncoderSettings {
        gop_size: 4,
        flags: CodingFlags { adaptive_downsampling: false, refinement: false, ..Default::default() },
        fixed_d: DownsampleFactor::from_value(2).unwrap(),
        ..settings(2)
    };
    let out = roundtrip(&seq, &s);
    assert!(out
        .stats
        .iter()
        .filter(|st| st.frame_type == FrameType::B)
        .all(|st| st.factor == Some(DownsampleFactor::from_value(2).unwrap())));
}

#[test]
fn inadmissible_fixed_factor_is_an_error() {
    let seq = static_sequence(64, 64, 3, 1);
    let s = EncoderSettings {
        gop_size: 2,
        flags: CodingFlags { adaptive_downsampling: false, ..Default::default() },
        fixed_d: DownsampleFactor::from_value(8).unwrap(),
        ..settings(0)
    };
    assert!(matches!(encode_sequence(&seq, &s), Err(Error::InvalidFactor { .. })));
}

#[test]
fn larger_reference_distance_gets_larger_factor_on_pan() {
    // 8 px between references at i = 1, 64 px at i = 8
    let seq = pan_sequence(256, 128, 17, 4, 4);
    let out = encode_sequence(&seq, &settings(1)).unwrap();
    let d_at = |i: usize| {
        out.stats.iter().filter(|s| s.ref_distance == i && s.frame_type == FrameType::B).map(|s| s.factor.unwrap().value()).max().unwrap()
    };
    assert!(d_at(8) > d_at(1), "i=8 -> {}, i=1 -> {}", d_at(8), d_at(1));
}

#[test]
fn mutated_magic_is_a_format_error() {
    let seq = static_sequence(32, 32, 3, 1);
    let mut bytes = encode_sequence(&seq, &EncoderSettings { gop_size: 2, ..settings(0) }).unwrap().bitstream;
    bytes[1] = b'X';
    assert!(matches!(decode_sequence(&bytes), Err(Error::Format(_))));
}

#[test]
fn truncation_reports_frame() {
    let seq = pan_sequence(64, 64, 5, 2, 1);
    let bytes = encode_sequence(&seq, &EncoderSettings { gop_size: 4, ..settings(0) }).unwrap().bitstream;
    for cut in [bytes.len() - 1, bytes.len() / 2, 20] {
        let err = decode_sequence(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::TruncatedFrame { .. }), "cut {cut}: {err}");
        assert!(err.to_string().starts_with("truncated at frame "));
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_sequence(&extra), Err(Error::Format(_))));
}

#[test]
fn thread_count_does_not_change_the_stream() {
    let seq = pan_sequence(96, 64, 9, 5, 8);
    let one = encode_sequence(&seq, &EncoderSettings { gop_size: 8, threads: Some(1), ..settings(1) }).unwrap();
    let four = encode_sequence(&seq, &EncoderSettings { gop_size: 8, threads: Some(4), ..settings(1) }).unwrap();
    assert_eq!(one.bitstream, four.bitstream);
}
