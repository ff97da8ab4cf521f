use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, StftEngine, OLA_FLOOR};
use crate::error::{Error, Result};
use crate::model::{apply_mask_row, flag_of, DetectorState, FrameFeaturizer, Model, NetState, INPUT_CHANNELS};
use crate::runtime::gate::{splice_segment, DEFAULT_HANGOVER};
use crate::tensor::FeatureMap;

/// Phase handling of the streaming synthesizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlaMode {
    /// Noisy phase, no lookahead.
    #[default]
    Off,
    /// `k` local Griffin-Lim iterations per frame over a three-frame window,
    /// at the cost of one extra hop of latency.
    Buffered(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamOptions {
    /// Run the noise detector and only enhance frames near detected noise.
    pub nd: bool,
    pub gla: GlaMode,
    pub hangover: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            nd: false,
            gla: GlaMode::Off,
            hangover: DEFAULT_HANGOVER,
        }
    }
}

/// Counters describing the work a stream has done.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub samples_in: usize,
    pub samples_out: usize,
    pub frames: usize,
    /// Frames the enhancer ran on.
    pub enhanced_frames: usize,
    /// Frames the detector flagged before dilation.
    pub noisy_frames: usize,
}

#[derive(Debug, Clone)]
struct Analyzed {
    spec: Vec<Complex64>,
    feats: FeatureMap,
}

#[derive(Debug, Clone)]
struct Candidate {
    spec: Vec<Complex64>,
    /// Enhanced magnitude when the enhancer produced this frame.
    mag: Option<Vec<f64>>,
    needed: bool,
}

/// Frame-by-frame enhancer with carried state. Output sample `n` lines up
/// with input sample `n` and is emitted [`Stream::latency`] samples after it
/// arrives.
#[derive(Debug, Clone)]
pub struct Stream {
    model: Arc<Model>,
    opts: StreamOptions,
    engine: StftEngine,
    hop: usize,
    fft: usize,
    pad: usize,

    input: Vec<f64>,
    input_base: usize,
    received: usize,
    final_len: Option<usize>,

    next_frame: usize,
    featurizer: FrameFeaturizer,
    net: NetState,
    det: DetectorState,
    pending: VecDeque<Analyzed>,
    raw_flags: Vec<u8>,
    probs: Vec<f64>,
    flags: Vec<u8>,

    left: Option<Vec<Complex64>>,
    cand: Option<Candidate>,
    finalized: usize,
    tail: Vec<f64>,
    emitted: usize,
    enhanced_frames: usize,
}

impl Stream {
    pub fn new(model: Arc<Model>, opts: StreamOptions) -> Result<Self> {
        let cfg = model.config().clone();
        let engine = StftEngine::new(cfg.stft)?;
        let (hop, fft) = (cfg.stft.hop, cfg.stft.fft_len);
        if fft != 2 * hop {
            return Err(Error::Config("streaming requires fft_len = 2·hop".into()));
        }
        Ok(Self {
            net: model.new_state(),
            det: model.new_detector_state(),
            featurizer: FrameFeaturizer::new(&cfg),
            engine,
            hop,
            fft,
            pad: cfg.stft.front_pad(),
            input: Vec::new(),
            input_base: 0,
            received: 0,
            final_len: None,
            next_frame: 0,
            pending: VecDeque::new(),
            raw_flags: Vec::new(),
            probs: Vec::new(),
            flags: Vec::new(),
            left: None,
            cand: None,
            finalized: 0,
            tail: vec![0.0; hop],
            emitted: 0,
            enhanced_frames: 0,
            model,
            opts,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.final_len.is_some()
    }

    pub fn options(&self) -> &StreamOptions {
        &self.opts
    }

    /// Samples consumed so far.
    pub fn sample_clock(&self) -> usize {
        self.received
    }

    /// Delay in samples between an input sample arriving and the matching
    /// output sample being emitted.
    pub fn latency(&self) -> usize {
        let gla = usize::from(matches!(self.opts.gla, GlaMode::Buffered(_)));
        let nd = if self.opts.nd { self.opts.hangover } else { 0 };
        self.pad + self.hop * (gla + nd)
    }

    /// True while no input has been consumed and every carried buffer is zero.
    pub fn is_fresh(&self) -> bool {
        self.received == 0
            && self.net.is_zero()
            && self.det.is_zero()
            && self.tail.iter().all(|v| *v == 0.0)
            && self.pending.is_empty()
            && self.cand.is_none()
    }

    pub fn stats(&self) -> StreamStats {
        StreamStats {
            samples_in: self.received,
            samples_out: self.emitted,
            frames: self.next_frame,
            enhanced_frames: self.enhanced_frames,
            noisy_frames: self.raw_flags.iter().filter(|&&f| f != 0).count(),
        }
    }

    /// Detector decisions so far, before dilation. Empty without the detector.
    pub fn raw_flags(&self) -> &[u8] {
        &self.raw_flags
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Consumes a chunk of any length and returns every sample that became
    /// final.
    pub fn push(&mut self, chunk: &[f64]) -> Result<Vec<f64>> {
        if self.final_len.is_some() {
            return Err(Error::Config("stream already finished".into()));
        }
        if let Some(i) = chunk.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite sample at chunk index {i}")));
        }
        self.input.extend_from_slice(chunk);
        self.received += chunk.len();
        let mut out = Vec::new();
        self.pump(&mut out)?;
        Ok(out)
    }

    /// Flushes the stream: the tail is zero-padded onto the offline frame
    /// grid and the remaining samples up to the input length are returned.
    /// Further pushes are rejected; finishing twice returns nothing.
    pub fn finish(&mut self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        if self.received == 0 || self.final_len.is_some() {
            self.final_len = Some(self.received);
            return Ok(out);
        }
        self.final_len = Some(self.received);
        self.pump(&mut out)?;
        if let Some(c) = self.cand.take() {
            self.finalize_candidate(c, None, &mut out)?;
        }
        Ok(out)
    }

    fn total_frames(&self) -> Option<usize> {
        self.final_len.map(|l| self.model.config().stft.num_frames(l))
    }

    fn frame_ready(&self, t: usize) -> bool {
        match self.total_frames() {
            Some(n) => t < n,
            None if t == 0 => self.received > self.pad,
            None => self.received >= t * self.hop + self.fft - self.pad,
        }
    }

    fn sample(&self, n: usize) -> f64 {
        if n < self.received {
            self.input[n - self.input_base]
        } else {
            0.0
        }
    }

    fn pump(&mut self, out: &mut Vec<f64>) -> Result<()> {
        while self.frame_ready(self.next_frame) {
            self.analyze_next()?;
        }
        while !self.pending.is_empty() {
            let u = self.flags.len();
            let Some(d) = self.decide(u) else { break };
            self.flags.push(d);
            let frame = self.pending.pop_front().expect("pending frame");
            self.process(u, frame, out)?;
        }
        self.trim();
        Ok(())
    }

    fn analyze_next(&mut self) -> Result<()> {
        let t = self.next_frame;
        let reflect_len = self.final_len.unwrap_or(self.received);
        let frame: Vec<f64> = (0..self.fft)
            .map(|j| {
                let p = t * self.hop + j;
                if p < self.pad {
                    self.sample(crate::dsp::reflect_index(self.pad - p, reflect_len))
                } else {
                    self.sample(p - self.pad)
                }
            })
            .collect();
        let mut spec = vec![Complex64::new(0.0, 0.0); self.fft / 2 + 1];
        self.engine.analyze_frame(&frame, &mut spec);

        let cfg = self.model.config();
        let mut feats = FeatureMap::zeros(1, INPUT_CHANNELS, 1, cfg.working_bins);
        self.featurizer.push(&spec, &mut feats, 0);

        if self.opts.nd {
            let mags: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
            let mut mel = FeatureMap::zeros(1, 1, 1, cfg.mel.n_mels);
            dsp::project_log_mel(self.model.mel_filterbank(), &mags, mel.data_mut());
            let p = self.model.detector_step(&mel, &mut self.det)?[0];
            self.probs.push(p);
            self.raw_flags.push(flag_of(p));
        }
        self.pending.push_back(Analyzed { spec, feats });
        self.next_frame += 1;
        Ok(())
    }

    /// Dilated flag of frame `u`, once enough lookahead is available.
    fn decide(&self, u: usize) -> Option<u8> {
        if !self.opts.nd {
            return Some(1);
        }
        let h = self.opts.hangover;
        let all_known = self.total_frames() == Some(self.next_frame);
        if self.raw_flags.len() <= u + h && !all_known {
            return None;
        }
        let hi = (u + h).min(self.raw_flags.len() - 1);
        Some(u8::from(self.raw_flags[u.saturating_sub(h)..=hi].iter().any(|&f| f != 0)))
    }

    fn process(&mut self, u: usize, frame: Analyzed, out: &mut Vec<f64>) -> Result<()> {
        let needed = self.flags[u.saturating_sub(2)..=u].iter().any(|&f| f != 0);
        let cand = if needed {
            let mask = self.model.enhancer_step(&frame.feats, &mut self.net)?;
            let mut mag = vec![0.0; frame.spec.len()];
            apply_mask_row(mask.data(), &frame.spec, self.model.config().compress_c, &mut mag);
            self.enhanced_frames += 1;
            let spec = frame
                .spec
                .iter()
                .zip(&mag)
                .map(|(&z, &m)| Complex64::from_polar(m, dsp::angle(z)))
                .collect();
            Candidate {
                spec,
                mag: Some(mag),
                needed,
            }
        } else {
            Candidate {
                spec: frame.spec,
                mag: None,
                needed,
            }
        };
        match self.opts.gla {
            GlaMode::Off => self.finalize(&cand, out),
            GlaMode::Buffered(_) => {
                if let Some(prev) = self.cand.take() {
                    let right = Some(cand.spec.clone());
                    self.finalize_candidate(prev, right, out)?;
                }
                self.cand = Some(cand);
                Ok(())
            }
        }
    }

    fn finalize_candidate(&mut self, mut c: Candidate, right: Option<Vec<Complex64>>, out: &mut Vec<f64>) -> Result<()> {
        if let (GlaMode::Buffered(k), Some(mag)) = (self.opts.gla, &c.mag) {
            for _ in 0..k {
                c.spec = self.local_gla(self.left.as_deref(), &c.spec, mag, right.as_deref());
            }
        }
        self.finalize(&c, out)?;
        self.left = Some(c.spec);
        Ok(())
    }

    /// One Griffin-Lim projection of the centre frame given its neighbours.
    fn local_gla(&self, left: Option<&[Complex64]>, centre: &[Complex64], mag: &[f64], right: Option<&[Complex64]>) -> Vec<Complex64> {
        let (hop, n) = (self.hop, self.fft);
        let w = self.engine.window();
        let mut acc = vec![0.0; n + 2 * hop];
        let mut norm = vec![0.0; n + 2 * hop];
        let mut buf = vec![0.0; n];
        for (offset, spec) in [(0, left), (hop, Some(centre)), (2 * hop, right)] {
            if let Some(s) = spec {
                self.engine.synthesize_frame(s, &mut buf);
                for i in 0..n {
                    acc[offset + i] += buf[i];
                    norm[offset + i] += w[i] * w[i];
                }
            }
        }
        let seg: Vec<f64> = (hop..hop + n).map(|i| acc[i] / norm[i].max(OLA_FLOOR)).collect();
        let mut proj = vec![Complex64::new(0.0, 0.0); centre.len()];
        self.engine.analyze_frame(&seg, &mut proj);
        proj.iter()
            .zip(mag)
            .map(|(&z, &m)| Complex64::from_polar(m, dsp::angle(z)))
            .collect()
    }

    /// Overlap-adds a final frame and emits the segment it completes.
    fn finalize(&mut self, c: &Candidate, out: &mut Vec<f64>) -> Result<()> {
        let (hop, n) = (self.hop, self.fft);
        let u = self.finalized;
        let mut frame = vec![0.0; n];
        if c.needed {
            self.engine.synthesize_frame(&c.spec, &mut frame);
        }
        if u >= 1 {
            let w = self.engine.window();
            let s = u - 1;
            let start = s * hop;
            let end = match self.final_len {
                Some(l) => ((s + 1) * hop).min(l),
                None => (s + 1) * hop,
            };
            if start < end {
                let enhanced: Vec<f64> = (0..end - start)
                    .map(|i| {
                        let acc = 0.0 + self.tail[i] + frame[i];
                        let norm = 0.0 + w[hop + i] * w[hop + i] + w[i] * w[i];
                        acc / norm.max(OLA_FLOOR)
                    })
                    .collect();
                let x = &self.input[start - self.input_base..end - self.input_base];
                if self.opts.nd {
                    let prev = self.flags[s.saturating_sub(1)];
                    splice_segment(prev, self.flags[s], x, &enhanced, hop, out);
                } else {
                    out.extend_from_slice(&enhanced);
                }
                self.emitted = end;
            }
        }
        self.tail.copy_from_slice(&frame[hop..]);
        self.finalized += 1;
        Ok(())
    }

    /// Drops input samples no later frame or segment can reach.
    fn trim(&mut self) {
        let frame_start = (self.next_frame * self.hop).saturating_sub(self.pad);
        let keep_from = if self.next_frame == 0 { 0 } else { frame_start.min(self.emitted) };
        let drop = keep_from.saturating_sub(self.input_base);
        if drop >= 4 * self.fft {
            self.input.drain(..drop);
            self.input_base += drop;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn declared_latencies() {
        let m = Arc::new(Model::new(ModelConfig::default(), 0).unwrap());
        let lat = |nd, gla| {
            Stream::new(m.clone(), StreamOptions { nd, gla, hangover: 3 })
                .unwrap()
                .latency()
        };
        assert_eq!(lat(false, GlaMode::Off), 256);
        assert_eq!(lat(false, GlaMode::Buffered(2)), 512);
        assert_eq!(lat(true, GlaMode::Off), 1024);
    }

    #[test]
    fn fresh_stream_is_zeroed() {
        let m = Arc::new(Model::new(ModelConfig::tiny(), 0).unwrap());
        let s = Stream::new(m, StreamOptions::default()).unwrap();
        assert_eq!(s.sample_clock(), 0);
        assert!(s.is_fresh());
    }
}
