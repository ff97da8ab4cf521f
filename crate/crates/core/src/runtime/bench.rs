use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{count_macs, Model};
use crate::runtime::{Stream, StreamOptions, StreamStats};
use crate::synth::NoisyPair;
use crate::training::{TrainConfig, TrainExample, TrainMode, Trainer};

/// Environment variable capping the number of benchmark workers.
pub const THREADS_ENV: &str = "LISEN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    pub audio_seconds: f64,
    /// Median wall time over the repeats.
    pub wall_seconds: f64,
    pub rtf: f64,
    /// Fraction of frames the detector flagged; 1 when the detector is off.
    pub noise_proportion: f64,
    /// Fraction of frames the enhancer ran on.
    pub enhanced_fraction: f64,
    /// Multiply-accumulates per second of audio actually spent.
    pub macs_effective: f64,
    pub repeats: usize,
    pub nd: bool,
}

/// Worker count from [`THREADS_ENV`], at least 1; 1 when unset or invalid.
pub fn bench_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn check_audio(model: &Model, audio: &[f64], repeats: usize) -> Result<f64> {
    let seconds = audio.len() as f64 / model.config().stft.sample_rate as f64;
    if seconds < 1.0 {
        return Err(Error::Config(format!("benchmark audio must last at least 1 s, got {seconds:.3} s")));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    Ok(seconds)
}

/// One timed pass through a fresh stream in hop-sized chunks.
fn timed_pass(model: &Arc<Model>, audio: &[f64], enable_nd: bool) -> Result<(f64, StreamStats)> {
    let opts = StreamOptions {
        nd: enable_nd,
        ..Default::default()
    };
    let start = Instant::now();
    let mut s = Stream::new(model.clone(), opts)?;
    for chunk in audio.chunks(model.config().stft.hop) {
        std::hint::black_box(s.push(chunk)?);
    }
    std::hint::black_box(s.finish()?);
    Ok((start.elapsed().as_secs_f64(), s.stats()))
}

fn report(model: &Model, seconds: f64, walls: Vec<f64>, st: StreamStats, enable_nd: bool) -> RtfReport {
    let frames = st.frames.max(1) as f64;
    let enhanced_fraction = st.enhanced_frames as f64 / frames;
    let macs = count_macs(model, 1.0);
    let nd_macs = if enable_nd { macs.detector } else { 0.0 };
    let repeats = walls.len();
    let wall = median(walls).max(f64::MIN_POSITIVE);
    RtfReport {
        audio_seconds: seconds,
        wall_seconds: wall,
        rtf: wall / seconds,
        noise_proportion: if enable_nd { st.noisy_frames as f64 / frames } else { 1.0 },
        enhanced_fraction,
        macs_effective: nd_macs + enhanced_fraction * macs.enhancer,
        repeats,
        nd: enable_nd,
    }
}

/// Streams `audio` through the model in hop-sized chunks `repeats` times
/// and reports the median real-time factor.
pub fn measure_rtf(model: &Arc<Model>, audio: &[f64], enable_nd: bool, repeats: usize) -> Result<RtfReport> {
    let seconds = check_audio(model, audio, repeats)?;
    let mut walls = Vec::with_capacity(repeats);
    let mut stats = StreamStats::default();
    for _ in 0..repeats {
        let (w, st) = timed_pass(model, audio, enable_nd)?;
        walls.push(w);
        stats = st;
    }
    Ok(report(model, seconds, walls, stats, enable_nd))
}

/// Benchmark input: a harmonic tone with 0 dB white noise over the leading
/// `proportion` of the signal.
pub fn bench_signal(proportion: f64, seconds: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
    NoisyPair::tone_in_noise(seconds, sample_rate, 0.0, proportion, seed).noisy
}

/// Trains only the detector on clean, fully noisy and half noisy versions
/// of the benchmark signal so that its flags track the noise proportion.
pub fn fit_bench_detector(model: &mut Model, steps: usize, seed: u64) -> Result<Vec<f64>> {
    let sr = model.config().stft.sample_rate;
    let examples = [0.0, 1.0, 0.5]
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let pair = NoisyPair::tone_in_noise(1.0, sr, 0.0, p, seed.wrapping_add(i as u64));
            TrainExample::new(model, &pair.noisy, &pair.clean)
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        mode: TrainMode::Detector,
        lr0: 5e-3,
        ..Default::default()
    };
    let mut trainer = Trainer::new(model, cfg)?;
    let mut losses = Vec::with_capacity(steps);
    for i in 0..steps {
        losses.push(trainer.step(model, &examples[i % examples.len()])?.0);
    }
    Ok(losses)
}

/// Measures each proportion on its own benchmark signal, spreading the
/// proportions over at most `threads` workers.
pub fn run_bench(
    model: &Arc<Model>,
    proportions: &[f64],
    seconds: f64,
    enable_nd: bool,
    repeats: usize,
    threads: usize,
    seed: u64,
) -> Result<Vec<RtfReport>> {
    if let Some(p) = proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("noise proportion {p} outside [0, 1]")));
    }
    let sr = model.config().stft.sample_rate;
    let signals: Vec<Vec<f64>> = proportions.iter().map(|&p| bench_signal(p, seconds, sr, seed)).collect();
    let workers = threads.clamp(1, proportions.len().max(1));
    let per_worker = proportions.len().div_ceil(workers).max(1);
    let mut slots: Vec<Option<Result<RtfReport>>> = (0..proportions.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk, sigs) in slots.chunks_mut(per_worker).zip(signals.chunks(per_worker)) {
            scope.spawn(move || {
                for (slot, r) in chunk.iter_mut().zip(interleaved(model, sigs, enable_nd, repeats)) {
                    *slot = Some(r);
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// Repeats are the outer loop so that a transient slowdown is shared by
/// every signal instead of landing on one.
fn interleaved(model: &Arc<Model>, signals: &[Vec<f64>], enable_nd: bool, repeats: usize) -> Vec<Result<RtfReport>> {
    let run = || -> Result<Vec<RtfReport>> {
        let seconds: Vec<f64> = signals.iter().map(|s| check_audio(model, s, repeats)).collect::<Result<_>>()?;
        let mut walls = vec![Vec::with_capacity(repeats); signals.len()];
        let mut stats = vec![StreamStats::default(); signals.len()];
        for s in signals {
            timed_pass(model, s, enable_nd)?;
        }
        for _ in 0..repeats {
            for (i, s) in signals.iter().enumerate() {
                let (w, st) = timed_pass(model, s, enable_nd)?;
                walls[i].push(w);
                stats[i] = st;
            }
        }
        Ok(walls
            .into_iter()
            .zip(stats)
            .zip(seconds)
            .map(|((w, st), sec)| report(model, sec, w, st, enable_nd))
            .collect())
    };
    match run() {
        Ok(v) => v.into_iter().map(Ok).collect(),
        Err(e) => {
            let msg = e.to_string();
            signals.iter().map(|_| Err(Error::Config(msg.clone()))).collect()
        }
    }
}
