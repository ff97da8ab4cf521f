use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::angle;
use crate::error::{check_dim, Error, Result};
use crate::tensor::Matrix;

/// Floor on the summed squared window. The smallest nonzero periodic-Hann
/// contribution at 512 points is about 1.4e-9, so the floor only touches
/// samples no frame observes.
pub const OLA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

/// Frame geometry of the analysis/synthesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_len: 512,
            hop: 256,
            window: WindowKind::Hann,
            sample_rate: 16_000,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_len.is_power_of_two() || self.fft_len < 2 {
            return Err(Error::Config(format!(
                "fft_len {} is not a power of two",
                self.fft_len
            )));
        }
        if self.hop == 0 || self.hop > self.fft_len {
            return Err(Error::Config(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.fft_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Reflect padding applied ahead of the first sample.
    #[inline]
    pub fn front_pad(&self) -> usize {
        self.fft_len - self.hop
    }

    /// `ceil((len + fft_len - hop) / hop)`.
    pub fn num_frames(&self, len: usize) -> usize {
        (len + self.front_pad()).div_ceil(self.hop)
    }

    /// Length of the padded analysis domain spanned by `frames` frames.
    pub fn padded_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.fft_len
        }
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            // periodic Hann
            WindowKind::Hann => (0..self.fft_len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / self.fft_len as f64).cos())
                .collect(),
        }
    }
}

/// T×F complex STFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); frames * bins],
        }
    }

    pub fn from_vec(frames: usize, bins: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dim("ComplexSpectrum::from_vec", "len", frames * bins, data.len())?;
        Ok(Self { frames, bins, data })
    }

    pub fn from_polar(mag: &Matrix, phase: &Matrix) -> Result<Self> {
        check_dim("ComplexSpectrum::from_polar", "frames", mag.rows(), phase.rows())?;
        check_dim("ComplexSpectrum::from_polar", "bins", mag.cols(), phase.cols())?;
        let data = mag
            .data()
            .iter()
            .zip(phase.data())
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        Ok(Self {
            frames: mag.rows(),
            bins: mag.cols(),
            data,
        })
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn magnitude(&self) -> Matrix {
        Matrix::from_vec(
            self.frames,
            self.bins,
            self.data.iter().map(|z| z.norm()).collect(),
        )
        .expect("shape is consistent")
    }

    pub fn phase(&self) -> Matrix {
        Matrix::from_vec(
            self.frames,
            self.bins,
            self.data.iter().map(|&z| angle(z)).collect(),
        )
        .expect("shape is consistent")
    }

    pub fn mag_phase(&self) -> MagPhase {
        MagPhase {
            mag: self.magnitude(),
            phase: self.phase(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            frames: self.frames,
            bins: self.bins,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }
}

/// Polar view of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MagPhase {
    pub mag: Matrix,
    pub phase: Matrix,
}

/// Planned FFTs plus window for one [`StftConfig`].
#[derive(Clone)]
pub struct StftEngine {
    cfg: StftConfig,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftEngine").field("cfg", &self.cfg).finish()
    }
}

impl StftEngine {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            window: cfg.window(),
            fwd: planner.plan_fft_forward(cfg.fft_len),
            inv: planner.plan_fft_inverse(cfg.fft_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Windowed DFT of one `fft_len` frame; phase is referenced to the frame start.
    pub fn analyze_frame(&self, frame: &[f64], out: &mut [Complex64]) {
        let n = self.cfg.fft_len;
        debug_assert_eq!(frame.len(), n);
        debug_assert_eq!(out.len(), self.cfg.bins());
        let mut buf: Vec<Complex64> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex64::new(x * w, 0.0))
            .collect();
        self.fwd.process(&mut buf);
        out.copy_from_slice(&buf[..self.cfg.bins()]);
    }

    /// Windowed inverse DFT of one half spectrum (Hermitian extension implied).
    pub fn synthesize_frame(&self, bins: &[Complex64], out: &mut [f64]) {
        let n = self.cfg.fft_len;
        let nb = self.cfg.bins();
        debug_assert_eq!(bins.len(), nb);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(bins[0].re, 0.0);
        buf[n / 2] = Complex64::new(bins[nb - 1].re, 0.0);
        for f in 1..nb - 1 {
            buf[f] = bins[f];
            buf[n - f] = bins[f].conj();
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / n as f64;
        for ((o, z), &w) in out.iter_mut().zip(&buf).zip(&self.window) {
            *o = z.re * scale * w;
        }
    }

    /// Reflect-pad the front by `fft_len - hop` and zero-pad the tail out to
    /// the frame grid.
    pub fn pad_signal(&self, signal: &[f64]) -> Vec<f64> {
        let pad = self.cfg.front_pad();
        let frames = self.cfg.num_frames(signal.len());
        let total = self.cfg.padded_len(frames);
        let mut out = vec![0.0; total];
        for (i, o) in out.iter_mut().enumerate().take(pad) {
            *o = signal[reflect_index(pad - i, signal.len())];
        }
        out[pad..pad + signal.len()].copy_from_slice(signal);
        out
    }

    /// Frames of an already padded signal.
    pub fn analyze_padded(&self, padded: &[f64], frames: usize) -> ComplexSpectrum {
        let (n, hop, nb) = (self.cfg.fft_len, self.cfg.hop, self.cfg.bins());
        let mut spec = ComplexSpectrum::zeros(frames, nb);
        for t in 0..frames {
            self.analyze_frame(&padded[t * hop..t * hop + n], spec.row_mut(t));
        }
        spec
    }

    /// Weighted overlap-add over the padded domain, normalized by the summed
    /// squared window (clamped at [`OLA_FLOOR`]).
    pub fn overlap_add(&self, spec: &ComplexSpectrum) -> Result<Vec<f64>> {
        check_dim("istft", "bins", self.cfg.bins(), spec.bins())?;
        let (n, hop) = (self.cfg.fft_len, self.cfg.hop);
        let total = self.cfg.padded_len(spec.frames());
        let mut acc = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut frame = vec![0.0; n];
        for t in 0..spec.frames() {
            self.synthesize_frame(spec.row(t), &mut frame);
            let base = t * hop;
            for i in 0..n {
                acc[base + i] += frame[i];
                norm[base + i] += self.window[i] * self.window[i];
            }
        }
        for (a, d) in acc.iter_mut().zip(&norm) {
            *a /= d.max(OLA_FLOOR);
        }
        Ok(acc)
    }
}

/// Mirror index for reflect padding; folds repeatedly for short signals.
pub(crate) fn reflect_index(i: usize, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let j = i % period;
    if j < len {
        j
    } else {
        period - j
    }
}

/// STFT with causal frame alignment: the front is reflect-padded by
/// `fft_len - hop` samples, the tail zero-padded.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<ComplexSpectrum> {
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    let engine = StftEngine::new(*cfg)?;
    let padded = engine.pad_signal(signal);
    Ok(engine.analyze_padded(&padded, cfg.num_frames(signal.len())))
}

/// Inverse of [`stft`]; returns `frames * hop` samples aligned with the
/// original signal start (callers trim to the original length).
pub fn istft(spec: &ComplexSpectrum, cfg: &StftConfig) -> Result<Vec<f64>> {
    let engine = StftEngine::new(*cfg)?;
    let padded = engine.overlap_add(spec)?;
    let pad = cfg.front_pad();
    Ok(padded[pad.min(padded.len())..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn frame_count_formula() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.num_frames(16_000), 64);
        assert_eq!(cfg.num_frames(1), 2);
        assert_eq!(cfg.num_frames(256), 2);
        assert_eq!(cfg.num_frames(257), 3);
    }

    #[test]
    fn empty_signal_is_rejected() {
        assert!(matches!(
            stft(&[], &StftConfig::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let spec = stft(&vec![0.0; 3000], &StftConfig::default()).unwrap();
        assert!(spec.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn impulse_magnitude_equals_window_value() {
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 2048];
        x[0] = 1.0;
        let spec = stft(&x, &cfg).unwrap();
        // sample 0 sits at offset fft_len - hop inside frame 0
        let w = cfg.window()[cfg.front_pad()];
        for f in 0..cfg.bins() {
            assert!((spec.get(0, f).norm() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_energy_concentrates_on_bin_32() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..16_000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin())
            .collect();
        let spec = stft(&x, &cfg).unwrap();
        let t = 20;
        let mags: Vec<f64> = (0..cfg.bins()).map(|f| spec.get(t, f).norm()).collect();
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 32);
        for (f, m) in mags.iter().enumerate() {
            if (f as isize - 32).abs() > 2 {
                assert!(20.0 * (m / mags[32]).log10() <= -40.0, "bin {f}");
            }
        }
    }

    #[test]
    fn round_trip_reconstructs_signal() {
        let cfg = StftConfig::default();
        for (len, seed) in [(16_000, 1), (1024, 2), (4097, 3), (100, 4), (1, 5)] {
            let x = random_signal(len, seed);
            let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
            assert!(y.len() >= len);
            let err = crate::tensor::max_abs_diff(&x, &y[..len]);
            assert!(err <= 1e-6, "len {len}: err {err}");
        }
    }

    #[test]
    fn istft_is_linear() {
        let cfg = StftConfig::default();
        let x = random_signal(3000, 9);
        let spec = stft(&x, &cfg).unwrap();
        let y1 = istft(&spec, &cfg).unwrap();
        let y2 = istft(&spec.scale(2.0), &cfg).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        let zero = istft(&ComplexSpectrum::zeros(5, cfg.bins()), &cfg).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn istft_rejects_wrong_bins() {
        let cfg = StftConfig::default();
        assert!(istft(&ComplexSpectrum::zeros(3, 100), &cfg).is_err());
    }

    #[test]
    fn reflect_index_folds() {
        assert_eq!(reflect_index(3, 10), 3);
        assert_eq!(reflect_index(10, 10), 8);
        assert_eq!(reflect_index(5, 3), 1);
        assert_eq!(reflect_index(7, 1), 0);
    }
}
