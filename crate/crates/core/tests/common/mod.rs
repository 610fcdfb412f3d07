#![allow(dead_code)]

use std::path::PathBuf;

use mabc::frame::VideoSequence;
use mabc::synth::{pan_sequence, static_sequence, zoom_sequence};
use mabc::y4m::parse_y4m;

pub const FRAMES: usize = 17;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn natural() -> VideoSequence {
    let bytes = std::fs::read(fixture_dir().join("natural64.y4m")).expect("natural fixture");
    parse_y4m(&bytes).expect("natural fixture parses")
}

pub fn pan4() -> VideoSequence {
    pan_sequence(256, 128, FRAMES, 4, 7)
}

pub fn pan12() -> VideoSequence {
    pan_sequence(256, 128, FRAMES, 12, 7)
}

/// The five conformance fixtures.
pub fn all() -> Vec<(&'static str, VideoSequence)> {
    vec![
        ("static", static_sequence(64, 64, FRAMES, 1)),
        ("pan4", pan4()),
        ("pan12", pan12()),
        ("zoom", zoom_sequence(128, 128, FRAMES, 0.02, 3)),
        ("natural", natural()),
    ]
}
