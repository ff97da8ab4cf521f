use num_complex::Complex64;

use super::{ComplexSpectrum, StftConfig, StftEngine};
use crate::error::{check_dim, Error, Result};
use crate::tensor::Matrix;

fn check_inputs(mag: &Matrix, phase: &Matrix, cfg: &StftConfig) -> Result<()> {
    check_dim("griffin_lim", "bins", cfg.bins(), mag.cols())?;
    check_dim("griffin_lim", "frames", mag.rows(), phase.rows())?;
    check_dim("griffin_lim", "bins", mag.cols(), phase.cols())?;
    if let Some(i) = mag.data().iter().position(|&m| m < 0.0 || m.is_nan()) {
        return Err(Error::NegativeMagnitude(i));
    }
    Ok(())
}

/// Project `mag·e^{i·phase}` onto the consistent set: iSTFT then STFT over
/// the padded domain.
fn project(engine: &StftEngine, spec: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    let signal = engine.overlap_add(spec)?;
    Ok(engine.analyze_padded(&signal, spec.frames()))
}

/// One iteration `P ← ∠STFT(iSTFT(A·e^{iP}))`.
pub fn griffin_lim_step(engine: &StftEngine, mag: &Matrix, phase: &Matrix) -> Result<Matrix> {
    let spec = ComplexSpectrum::from_polar(mag, phase)?;
    Ok(project(engine, &spec)?.phase())
}

/// `k` Griffin-Lim iterations starting from `phase_init`. Returns phase only;
/// the caller re-imposes the magnitude at synthesis.
pub fn griffin_lim_refine(
    mag: &Matrix,
    phase_init: &Matrix,
    k: usize,
    cfg: &StftConfig,
) -> Result<Matrix> {
    check_inputs(mag, phase_init, cfg)?;
    if k == 0 {
        return Ok(phase_init.clone());
    }
    let engine = StftEngine::new(*cfg)?;
    let mut phase = phase_init.clone();
    for _ in 0..k {
        phase = griffin_lim_step(&engine, mag, &phase)?;
    }
    Ok(phase)
}

/// `‖S − STFT(iSTFT(S))‖` with `S = mag·e^{i·phase}`, measured over the full
/// Hermitian-extended spectrum (interior bins count twice).
pub fn consistency_error(mag: &Matrix, phase: &Matrix, cfg: &StftConfig) -> Result<f64> {
    check_inputs(mag, phase, cfg)?;
    let engine = StftEngine::new(*cfg)?;
    let spec = ComplexSpectrum::from_polar(mag, phase)?;
    let proj = project(&engine, &spec)?;
    let nb = cfg.bins();
    let mut acc = 0.0;
    for t in 0..spec.frames() {
        for (f, (a, b)) in spec.row(t).iter().zip(proj.row(t)).enumerate() {
            let d: Complex64 = a - b;
            let w = if f == 0 || f == nb - 1 { 1.0 } else { 2.0 };
            acc += w * d.norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, wrap_phase};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_mag_phase(frames: usize, bins: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mag = Matrix::from_fn(frames, bins, |_, _| rng.random_range(0.0..2.0));
        let phase = Matrix::from_fn(frames, bins, |_, _| rng.random_range(-PI..PI));
        (mag, phase)
    }

    #[test]
    fn zero_iterations_is_identity() {
        let cfg = StftConfig::default();
        let (m, p) = random_mag_phase(6, cfg.bins(), 1);
        assert_eq!(griffin_lim_refine(&m, &p, 0, &cfg).unwrap(), p);
    }

    #[test]
    fn consistent_spectrum_is_a_fixed_point() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = stft(&x, &cfg).unwrap();
        let mp = spec.mag_phase();
        let e = consistency_error(&mp.mag, &mp.phase, &cfg).unwrap();
        assert!(e <= 1e-6, "{e}");
        let refined = griffin_lim_refine(&mp.mag, &mp.phase, 3, &cfg).unwrap();
        for (a, b) in refined.data().iter().zip(mp.phase.data()) {
            assert!(wrap_phase(a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn zero_spectrogram_is_consistent() {
        let cfg = StftConfig::default();
        let m = Matrix::zeros(4, cfg.bins());
        assert_eq!(consistency_error(&m, &m, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn error_decreases_monotonically() {
        let cfg = StftConfig::default();
        let (m, mut p) = random_mag_phase(10, cfg.bins(), 3);
        let engine = StftEngine::new(cfg).unwrap();
        let mut prev = consistency_error(&m, &p, &cfg).unwrap();
        assert!(prev > 0.0);
        for _ in 0..3 {
            p = griffin_lim_step(&engine, &m, &p).unwrap();
            let e = consistency_error(&m, &p, &cfg).unwrap();
            assert!(e <= prev, "{e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn negative_magnitude_is_rejected() {
        let cfg = StftConfig::default();
        let mut m = Matrix::zeros(2, cfg.bins());
        m.set(1, 3, -1.0);
        let p = Matrix::zeros(2, cfg.bins());
        assert!(matches!(
            griffin_lim_refine(&m, &p, 1, &cfg),
            Err(Error::NegativeMagnitude(_))
        ));
    }
}
