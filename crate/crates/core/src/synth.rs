//! Synthetic test signals: harmonic tones, white noise and SNR helpers.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Sum of `harmonics` sinusoids at multiples of `f0`, with amplitudes
/// falling as 1/k and the total scaled to peak-free RMS `rms`.
pub fn harmonic_tone(f0: f64, harmonics: usize, rms: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let mut x: Vec<f64> = (0..len)
        .map(|n| {
            (1..=harmonics.max(1))
                .map(|k| (2.0 * PI * f0 * k as f64 * n as f64 / sr).sin() / k as f64)
                .sum()
        })
        .collect();
    let r = rms_of(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / r);
    }
    x
}

/// Gaussian white noise with standard deviation `std`.
pub fn white_noise(len: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std.max(0.0)).expect("finite non-negative std");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

pub fn rms_of(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Scales `noise` so that `clean` over `noise` has the given SNR and returns
/// the scaled noise.
pub fn scale_noise_to_snr(clean: &[f64], noise: &[f64], snr_db: f64) -> Vec<f64> {
    let (pc, pn) = (rms_of(clean), rms_of(noise));
    if pn == 0.0 {
        return noise.to_vec();
    }
    let k = pc / pn / 10f64.powf(snr_db / 20.0);
    noise.iter().map(|v| v * k).collect()
}

/// `10·log10(‖reference‖² / ‖reference − estimate‖²)` over the common length.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let n = reference.len().min(estimate.len());
    let sig: f64 = reference[..n].iter().map(|v| v * v).sum();
    let err: f64 = reference[..n]
        .iter()
        .zip(&estimate[..n])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    10.0 * (sig / err.max(1e-300)).log10()
}

/// Clean tone plus white noise at `snr_db` over the leading
/// `noise_proportion` of the signal; the rest is noise-free.
#[derive(Debug, Clone)]
pub struct NoisyPair {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

impl NoisyPair {
    pub fn tone_in_noise(
        seconds: f64,
        sample_rate: u32,
        snr_db: f64,
        noise_proportion: f64,
        seed: u64,
    ) -> Self {
        let len = (seconds * sample_rate as f64).round() as usize;
        let clean = harmonic_tone(250.0, 4, 0.1, len, sample_rate);
        let noise = scale_noise_to_snr(&clean, &white_noise(len, 1.0, seed), snr_db);
        let cut = (noise_proportion.clamp(0.0, 1.0) * len as f64).round() as usize;
        let noisy = clean
            .iter()
            .zip(&noise)
            .enumerate()
            .map(|(i, (c, n))| if i < cut { c + n } else { *c })
            .collect();
        Self { clean, noisy }
    }

    pub fn noise(&self) -> Vec<f64> {
        self.noisy.iter().zip(&self.clean).map(|(a, b)| a - b).collect()
    }
}
