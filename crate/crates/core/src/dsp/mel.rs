use serde::{Deserialize, Serialize};

use super::{ComplexSpectrum, StftConfig};
use crate::error::{check_dim, Error, Result};
use crate::tensor::Matrix;

/// Additive floor inside `log10(mel + floor)`.
pub const MEL_LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            f_min: 0.0,
            f_max: None,
        }
    }
}

impl MelConfig {
    pub fn f_max_for(&self, sample_rate: u32) -> f64 {
        self.f_max.unwrap_or(sample_rate as f64 / 2.0)
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank, `n_mels × bins`, unnormalized peak 1.
pub fn mel_filterbank(mel: &MelConfig, stft: &StftConfig) -> Result<Matrix> {
    let bins = stft.bins();
    if mel.n_mels == 0 || mel.n_mels > bins {
        return Err(Error::Config(format!(
            "n_mels {} must lie in 1..={bins}",
            mel.n_mels
        )));
    }
    let f_max = mel.f_max_for(stft.sample_rate);
    if !(mel.f_min >= 0.0 && mel.f_min < f_max && f_max <= stft.sample_rate as f64 / 2.0) {
        return Err(Error::Config(format!(
            "mel range [{}, {f_max}] invalid",
            mel.f_min
        )));
    }
    let (lo, hi) = (hz_to_mel(mel.f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..mel.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel.n_mels + 1) as f64))
        .collect();
    let bin_hz = stft.sample_rate as f64 / stft.fft_len as f64;
    Ok(Matrix::from_fn(mel.n_mels, bins, |m, k| {
        let f = k as f64 * bin_hz;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        let up = (f - l) / (c - l);
        let down = (r - f) / (r - c);
        up.min(down).max(0.0)
    }))
}

/// `log10(fb · |X| + 1e-5)` per frame; result is T × n_mels.
pub fn mel_spectrogram(spec: &ComplexSpectrum, mel: &MelConfig, stft: &StftConfig) -> Result<Matrix> {
    let fb = mel_filterbank(mel, stft)?;
    check_dim("mel_spectrogram", "bins", stft.bins(), spec.bins())?;
    let mut out = Matrix::zeros(spec.frames(), mel.n_mels);
    let mut mags = vec![0.0; spec.bins()];
    for t in 0..spec.frames() {
        for (m, z) in mags.iter_mut().zip(spec.row(t)) {
            *m = z.norm();
        }
        project_log_mel(&fb, &mags, out.row_mut(t));
    }
    Ok(out)
}

pub(crate) fn project_log_mel(fb: &Matrix, mags: &[f64], out: &mut [f64]) {
    for (m, o) in out.iter_mut().enumerate() {
        let e: f64 = fb.row(m).iter().zip(mags).map(|(w, a)| w * a).sum();
        *o = (e + MEL_LOG_FLOOR).log10();
    }
}
