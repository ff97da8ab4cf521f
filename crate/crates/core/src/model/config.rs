use serde::{Deserialize, Serialize};

use crate::dsp::{MelConfig, StftConfig};
use crate::error::{Error, Result};

/// Hyper-parameters of the enhancer and the noise detector.
///
/// `enc_channels` of length `L` gives one plain conv block followed by
/// `L - 1` sub-band downsampling blocks. `dec_channels` must have the same
/// length: `L - 1` sub-band upsampling blocks mirroring the encoder, then a
/// final conv to `dec_channels[L-1] = 1` channel feeding the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub compress_c: f64,
    pub enc_channels: Vec<usize>,
    pub dec_channels: Vec<usize>,
    pub nd_channels: Vec<usize>,
    pub gru_hidden: usize,
    pub bigru_hidden: usize,
    pub dpr_repeats: usize,
    pub gla_iters: usize,
    pub kernel: (usize, usize),
    pub subband_low_fraction: f64,
    pub lsigmoid_beta: f64,
    pub working_bins: usize,
}

pub const INPUT_CHANNELS: usize = 3;

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            compress_c: 0.3,
            enc_channels: vec![4, 8, 12, 16],
            dec_channels: vec![12, 8, 4, 1],
            nd_channels: vec![4, 8, 16, 32],
            gru_hidden: 24,
            bigru_hidden: 12,
            dpr_repeats: 2,
            gla_iters: 2,
            kernel: (2, 3),
            subband_low_fraction: 0.25,
            lsigmoid_beta: 2.0,
            working_bins: 256,
        }
    }
}

impl ModelConfig {
    /// A miniature configuration (32-point FFT, 16 working bins) for
    /// gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            stft: StftConfig {
                fft_len: 32,
                hop: 16,
                ..StftConfig::default()
            },
            mel: MelConfig {
                n_mels: 8,
                ..MelConfig::default()
            },
            enc_channels: vec![2, 2],
            dec_channels: vec![2, 1],
            nd_channels: vec![2, 2],
            gru_hidden: 4,
            bigru_hidden: 2,
            dpr_repeats: 1,
            working_bins: 16,
            ..Self::default()
        }
    }

    /// Frequency bins entering each encoder block and leaving the last one.
    pub fn encoder_freqs(&self) -> Vec<usize> {
        let mut f = vec![self.working_bins];
        for i in 1..self.enc_channels.len() {
            f.push(f[i - 1] / 2);
        }
        f
    }

    pub fn bottleneck(&self) -> (usize, usize) {
        (
            *self.enc_channels.last().unwrap_or(&0),
            *self.encoder_freqs().last().unwrap_or(&0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.stft.fft_len != 2 * self.stft.hop {
            return cfg(format!(
                "fft_len {} must be twice the hop {}",
                self.stft.fft_len, self.stft.hop
            ));
        }
        if !(self.compress_c > 0.0 && self.compress_c <= 1.0) {
            return cfg(format!("compress_c {} outside (0, 1]", self.compress_c));
        }
        if (self.subband_low_fraction - 0.25).abs() > 1e-12 {
            return cfg(format!(
                "subband_low_fraction {} must be 1/4 for an overall factor of 2",
                self.subband_low_fraction
            ));
        }
        if self.kernel.0 < 1 || !(self.kernel.1 == 1 || self.kernel.1 == 3) {
            return cfg(format!("kernel {:?}: need kt ≥ 1 and kf ∈ {{1, 3}}", self.kernel));
        }
        if self.lsigmoid_beta <= 0.0 {
            return cfg("lsigmoid_beta must be positive".into());
        }
        let l = self.enc_channels.len();
        if l < 1 || self.enc_channels.contains(&0) {
            return cfg("enc_channels must be non-empty and positive".into());
        }
        if self.dec_channels.len() != l {
            return cfg(format!(
                "dec_channels has {} entries, expected {l}",
                self.dec_channels.len()
            ));
        }
        if self.dec_channels[l - 1] != 1 {
            return cfg("the last decoder stage must produce 1 channel".into());
        }
        for j in 0..l - 1 {
            let skip = self.enc_channels[l - 2 - j];
            if self.dec_channels[j] != skip {
                return cfg(format!(
                    "decoder block {} has {} channels but its skip partner encoder block {} has {skip}",
                    j + 1,
                    self.dec_channels[j],
                    l - 1 - j
                ));
            }
        }
        if self.working_bins == 0 || self.working_bins > self.stft.bins() {
            return cfg(format!(
                "working_bins {} outside 1..={}",
                self.working_bins,
                self.stft.bins()
            ));
        }
        let freqs = self.encoder_freqs();
        for (i, &f) in freqs.iter().enumerate().take(l).skip(1) {
            let input = freqs[i - 1];
            if input % 4 != 0 || f * 2 != input {
                return cfg(format!(
                    "encoder block {} (sub-band downsampling): input bins {input} not divisible by 4",
                    i + 1
                ));
            }
        }
        if self.gru_hidden == 0 || self.bigru_hidden == 0 {
            return cfg("recurrent hidden sizes must be ≥ 1".into());
        }
        if self.mel.n_mels > self.stft.bins() || self.mel.n_mels == 0 {
            return cfg(format!("n_mels {} outside 1..={}", self.mel.n_mels, self.stft.bins()));
        }
        if self.nd_channels.is_empty() || self.nd_channels.contains(&0) {
            return cfg("nd_channels must be non-empty and positive".into());
        }
        let div = 1usize << self.nd_channels.len();
        if self.mel.n_mels % div != 0 {
            return cfg(format!(
                "n_mels {} not divisible by {div} for {} stride-2 detector blocks",
                self.mel.n_mels,
                self.nd_channels.len()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        assert_eq!(ModelConfig::default().encoder_freqs(), vec![256, 128, 64, 32]);
        assert_eq!(ModelConfig::default().bottleneck(), (16, 32));
    }

    #[test]
    fn divisibility_error_names_block() {
        let cfg = ModelConfig {
            working_bins: 200,
            ..ModelConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("encoder block 4"), "{err}");
    }

    #[test]
    fn skip_partner_mismatch_is_rejected() {
        let cfg = ModelConfig {
            dec_channels: vec![10, 8, 4, 1],
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
