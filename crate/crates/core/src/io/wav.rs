use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// The only sample rate the models accept; nothing is resampled.
pub const REQUIRED_SAMPLE_RATE: u32 = 16_000;

const PCM16_SCALE: f64 = 32768.0;

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::WavFormat(other.to_string()),
    }
}

/// Reads the first channel of a 16-bit PCM or 32-bit float WAV file.
/// PCM samples are scaled by 1/32768 into [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_rate != REQUIRED_SAMPLE_RATE {
        return Err(Error::SampleRate(spec.sample_rate));
    }
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::WavFormat(format!(
                "{bits}-bit {fmt:?} samples; only 16-bit PCM and 32-bit float are read"
            )))
        }
    };
    Ok((samples, spec.sample_rate))
}

/// Quantizes to 16-bit PCM, rounding to nearest and saturating at full scale.
pub fn quantize_pcm16(v: f64) -> i16 {
    if v.is_nan() {
        return 0;
    }
    (v * PCM16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes mono 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], rate: u32) -> Result<()> {
    if rate == 0 {
        return Err(Error::WavFormat("sample rate must be positive".into()));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(wav_err)?;
    for &v in samples {
        w.write_sample(quantize_pcm16(v)).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_saturates() {
        assert_eq!(quantize_pcm16(1.0), 32767);
        assert_eq!(quantize_pcm16(-1.0), -32768);
        assert_eq!(quantize_pcm16(-7.0), -32768);
        assert_eq!(quantize_pcm16(0.5 / 32768.0), 1);
        assert_eq!(quantize_pcm16(f64::NAN), 0);
    }
}
