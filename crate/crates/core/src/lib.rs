//! Set segmentation and early repetition detection for arm-orientation
//! streams.

pub mod fusion;
pub mod repdetect;
pub mod segmentation;
pub mod stats;
pub mod synth;
pub mod trace;
pub mod pipeline;
pub mod eval;
pub mod session;
