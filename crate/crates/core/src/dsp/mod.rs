//! Signal-domain primitives: STFT/iSTFT, power compression, baseband phase
//! differences, Mel features and Griffin-Lim phase refinement.
//!
//! All routines are pure functions of their arguments.

mod features;
mod gla;
mod mel;
mod stft;

pub(crate) use features::baseband_row;
pub(crate) use mel::project_log_mel;
pub(crate) use stft::reflect_index;
pub use features::{phase_diffs, power_compress, power_decompress, wrap_phase, PhaseDiffs};
pub use gla::{consistency_error, griffin_lim_refine, griffin_lim_step};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelConfig, MEL_LOG_FLOOR};
pub use stft::{istft, stft, ComplexSpectrum, MagPhase, StftConfig, StftEngine, WindowKind, OLA_FLOOR};

use num_complex::Complex64;

/// Phase angle in (−π, π] with `angle(0) = 0`.
#[inline]
pub fn angle(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angle_of_zero_is_zero() {
        assert_eq!(angle(Complex64::new(0.0, 0.0)), 0.0);
        assert_eq!(angle(Complex64::new(-0.0, -0.0)), 0.0);
    }

    #[test]
    fn angle_excludes_minus_pi() {
        assert_eq!(angle(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(angle(Complex64::new(-1.0, 0.0)), PI);
    }
}
