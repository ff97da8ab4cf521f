//! Lightweight real-time speech enhancement: sub-band encoder/decoder,
//! dual-path recurrent core, Griffin-Lim phase refinement and
//! noise-detector-gated streaming inference, with hand-written backward
//! passes for training and gradient checking.

pub mod dsp;
pub mod error;
pub mod io;
pub mod model;
pub mod nn;
pub mod runtime;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
