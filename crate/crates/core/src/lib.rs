//! Motion-adaptive bidirectional video codec.

pub mod adapt;
pub mod error;
pub mod eval;
pub mod flow;
pub mod frame;
pub mod gop;
pub mod mc;
pub mod residual;
pub mod synth;
pub mod y4m;

pub use error::{Error, Result};
