use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp::{self, ComplexSpectrum};
use crate::error::{check_dim, Result};
use crate::model::config::{ModelConfig, INPUT_CHANNELS};
use crate::tensor::{FeatureMap, Matrix};

/// Frame-at-a-time feature extraction. Keeps the previous phase row for the
/// time-axis phase difference.
#[derive(Debug, Clone)]
pub struct FrameFeaturizer {
    compress_c: f64,
    working_bins: usize,
    advance: f64,
    prev_phase: Option<Vec<f64>>,
    df: Vec<f64>,
    dt: Vec<f64>,
}

impl FrameFeaturizer {
    pub fn new(cfg: &ModelConfig) -> Self {
        let bins = cfg.stft.bins();
        Self {
            compress_c: cfg.compress_c,
            working_bins: cfg.working_bins,
            advance: 2.0 * PI * cfg.stft.hop as f64 / cfg.stft.fft_len as f64,
            prev_phase: None,
            df: vec![0.0; bins],
            dt: vec![0.0; bins],
        }
    }

    /// Writes the three feature channels of one frame into `out` at frame `t`.
    pub fn push(&mut self, row: &[Complex64], out: &mut FeatureMap, t: usize) {
        let phase: Vec<f64> = row.iter().map(|&z| dsp::angle(z)).collect();
        dsp::baseband_row(&phase, self.prev_phase.as_deref(), self.advance, &mut self.df, &mut self.dt);
        let f0 = self.working_bins;
        let c = self.compress_c;
        for (o, z) in out.freq_row_mut(0, 0, t).iter_mut().zip(row.iter().take(f0)) {
            *o = z.norm().powf(c);
        }
        out.freq_row_mut(0, 1, t).copy_from_slice(&self.df[..f0]);
        out.freq_row_mut(0, 2, t).copy_from_slice(&self.dt[..f0]);
        self.prev_phase = Some(phase);
    }
}

/// Input features (1, 3, T, F0): compressed magnitude, frequency and
/// baseband time phase differences. Bins at and above F0 are dropped.
pub fn featurize(spec: &ComplexSpectrum, cfg: &ModelConfig) -> Result<FeatureMap> {
    check_dim("featurize", "bins", cfg.stft.bins(), spec.bins())?;
    let mut out = FeatureMap::zeros(1, INPUT_CHANNELS, spec.frames(), cfg.working_bins);
    let mut fz = FrameFeaturizer::new(cfg);
    for t in 0..spec.frames() {
        fz.push(spec.row(t), &mut out, t);
    }
    Ok(out)
}

/// Enhanced magnitude of one frame: `(mask · |X|^c)^(1/c)` on the working
/// bins, `|X|` passed through above them.
pub fn apply_mask_row(mask: &[f64], row: &[Complex64], c: f64, out: &mut [f64]) {
    for (f, (o, z)) in out.iter_mut().zip(row).enumerate() {
        let a = z.norm();
        *o = match mask.get(f) {
            Some(&m) => (m * a.powf(c)).powf(1.0 / c),
            None => a,
        };
    }
}

/// Mask (1, 1, T, F0) as a T×F0 matrix.
pub fn mask_matrix(mask: &FeatureMap) -> Matrix {
    Matrix::from_fn(mask.frames(), mask.freqs(), |t, f| mask.get(0, 0, t, f))
}
