//! Streaming inference, detector gating and real-time-factor measurement.

mod bench;
mod gate;
mod stream;

pub use bench::{bench_signal, bench_threads, fit_bench_detector, measure_rtf, run_bench, RtfReport, THREADS_ENV};
pub use gate::{dilate, fade_in, fade_out, gate_and_splice, DEFAULT_HANGOVER};
pub use stream::{GlaMode, Stream, StreamOptions, StreamStats};

use std::sync::Arc;

use crate::error::Result;
use crate::model::{enhance_waveform_with, noise_detect, Model};

/// Offline enhancement with detector gating: the whole signal is enhanced,
/// then spliced with the raw input under the dilated noise flags.
pub fn enhance_gated(model: &Model, x: &[f64], gla_iters: usize, hangover: usize) -> Result<Vec<f64>> {
    let flags = noise_detect(model, x)?;
    let enhanced = enhance_waveform_with(model, x, gla_iters)?;
    gate_and_splice(x, &flags.flags, &enhanced, model.config().stft.hop, hangover)
}

/// Runs a whole signal through a fresh [`Stream`] in one push.
pub fn enhance_streaming(model: &Arc<Model>, x: &[f64], opts: StreamOptions) -> Result<Vec<f64>> {
    let mut s = Stream::new(model.clone(), opts)?;
    let mut y = s.push(x)?;
    y.extend(s.finish()?);
    Ok(y)
}
