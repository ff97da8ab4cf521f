use serde::{Deserialize, Serialize};

use crate::dsp::ComplexSpectrum;
use crate::error::{check_dim, Error, Result};
use crate::tensor::Matrix;
use crate::training::TrainConfig;

/// Probabilities are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]`.
pub const BCE_CLAMP: f64 = 1e-7;

fn same_shape(context: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    check_dim(context, "frames", a.rows(), b.rows())?;
    check_dim(context, "bins", a.cols(), b.cols())
}

fn nonneg(m: &Matrix) -> Result<()> {
    match m.data().iter().position(|&v| v < 0.0 || v.is_nan()) {
        Some(i) => Err(Error::NegativeMagnitude(i)),
        None => Ok(()),
    }
}

/// Mean squared error between power-compressed magnitudes.
pub fn loss_mag(mag_clean: &Matrix, mag_hat: &Matrix, c: f64) -> Result<f64> {
    same_shape("loss_mag", mag_clean, mag_hat)?;
    nonneg(mag_clean)?;
    nonneg(mag_hat)?;
    let n = mag_clean.data().len().max(1) as f64;
    let s: f64 = mag_clean
        .data()
        .iter()
        .zip(mag_hat.data())
        .map(|(a, b)| {
            let d = a.powf(c) - b.powf(c);
            d * d
        })
        .sum();
    Ok(s / n)
}

/// Mean squared modulus between the power-compressed clean spectrum and the
/// estimate `mag_hat^c · e^{i phase_hat}`.
pub fn loss_comp(spec_clean: &ComplexSpectrum, mag_hat: &Matrix, phase_hat: &Matrix, c: f64) -> Result<f64> {
    check_dim("loss_comp", "frames", spec_clean.frames(), mag_hat.rows())?;
    check_dim("loss_comp", "bins", spec_clean.bins(), mag_hat.cols())?;
    same_shape("loss_comp", mag_hat, phase_hat)?;
    nonneg(mag_hat)?;
    let n = mag_hat.data().len().max(1) as f64;
    let s: f64 = spec_clean
        .data()
        .iter()
        .zip(mag_hat.data().iter().zip(phase_hat.data()))
        .map(|(z, (&m, &p))| {
            let y = num_complex::Complex64::from_polar(z.norm().powf(c), z.arg());
            let e = num_complex::Complex64::from_polar(m.powf(c), p);
            (y - e).norm_sqr()
        })
        .sum();
    Ok(s / n)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

/// Mean binary cross-entropy of frame probabilities against 0/1 labels.
pub fn loss_bce(probs: &[f64], labels: &[u8]) -> Result<f64> {
    check_dim("loss_bce", "frames", labels.len(), probs.len())?;
    if probs.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(s / probs.len() as f64)
}

/// Individual loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub mag: f64,
    pub comp: f64,
    /// Present only when the detector takes part.
    pub bce: Option<f64>,
}

pub fn total_loss(cfg: &TrainConfig, parts: &LossParts) -> f64 {
    cfg.lambda1 * parts.mag + cfg.lambda2 * parts.comp + parts.bce.unwrap_or(0.0)
}

/// Spectral loss terms and their gradient with respect to the compressed
/// estimate. All matrices are T × bins and already compressed: `clean` holds
/// `|Y|^c`, `cos_dphi` holds `cos(P_y - P_x)`, `est` holds the estimate.
pub(crate) fn spectral_terms(
    cfg: &TrainConfig,
    clean: &Matrix,
    cos_dphi: &Matrix,
    est: &Matrix,
) -> (f64, f64, Matrix) {
    let n = est.data().len().max(1) as f64;
    let (mut mag, mut comp) = (0.0, 0.0);
    let mut grad = Matrix::zeros(est.rows(), est.cols());
    for (((g, &a), &cs), &e) in grad
        .data_mut()
        .iter_mut()
        .zip(clean.data())
        .zip(cos_dphi.data())
        .zip(est.data())
    {
        let d = e - a;
        mag += d * d;
        comp += (a * a + e * e - 2.0 * a * e * cs).max(0.0);
        *g = (cfg.lambda1 * 2.0 * d + cfg.lambda2 * 2.0 * (e - a * cs)) / n;
    }
    (mag / n, comp / n, grad)
}

/// BCE value and its gradient with respect to each probability. Clamped
/// probabilities get zero gradient.
pub(crate) fn bce_terms(probs: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    let n = probs.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let pc = clamp_prob(p);
            let y = f64::from(y != 0);
            loss += -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
            if pc != p {
                0.0
            } else {
                (p - y) / (p * (1.0 - p)) / n
            }
        })
        .collect();
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
    }

    #[test]
    fn mag_loss_cases() {
        let ones = Matrix::from_fn(3, 4, |_, _| 1.0);
        let zeros = Matrix::zeros(3, 4);
        assert_eq!(loss_mag(&ones, &ones, 0.3).unwrap(), 0.0);
        assert_eq!(loss_mag(&ones, &zeros, 0.3).unwrap(), 1.0);
        assert!(loss_mag(&ones, &Matrix::zeros(3, 5), 0.3).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_mat(&mut rng, 5, 7, 0.0, 3.0);
        let b = rand_mat(&mut rng, 5, 7, 0.0, 3.0);
        let mut s = 0.0;
        for t in 0..5 {
            for f in 0..7 {
                s += (a.get(t, f).powf(0.3) - b.get(t, f).powf(0.3)).powi(2);
            }
        }
        assert!((loss_mag(&a, &b, 0.3).unwrap() - s / 35.0).abs() < 1e-6);
    }

    #[test]
    fn comp_loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mag = rand_mat(&mut rng, 4, 6, 0.1, 2.0);
        let ph = rand_mat(&mut rng, 4, 6, -3.0, 3.0);
        let spec = ComplexSpectrum::from_polar(&mag, &ph).unwrap();
        assert!(loss_comp(&spec, &mag, &ph, 0.3).unwrap() < 1e-20);

        let mut flipped = ph.clone();
        flipped.set(1, 2, ph.get(1, 2) + std::f64::consts::PI);
        let m = mag.get(1, 2).powf(0.3);
        let got = loss_comp(&spec, &mag, &flipped, 0.3).unwrap() * 24.0;
        assert!((got - 4.0 * m * m).abs() < 1e-9);

        let mag2 = rand_mat(&mut rng, 4, 6, 0.0, 2.0);
        let ph2 = rand_mat(&mut rng, 4, 6, -3.0, 3.0);
        let mut s = 0.0;
        for t in 0..4 {
            for f in 0..6 {
                let y = spec.get(t, f);
                let yc = Complex64::from_polar(y.norm().powf(0.3), y.arg());
                let e = Complex64::from_polar(mag2.get(t, f).powf(0.3), ph2.get(t, f));
                let d = yc - e;
                s += d.re * d.re + d.im * d.im;
            }
        }
        assert!((loss_comp(&spec, &mag2, &ph2, 0.3).unwrap() - s / 24.0).abs() < 1e-6);
    }

    #[test]
    fn bce_cases() {
        let half = vec![0.5; 6];
        let l = loss_bce(&half, &[0, 1, 1, 0, 1, 0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        let labels = [0u8, 1, 1, 0];
        let exact: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        assert!(loss_bce(&exact, &labels).unwrap() <= 1.7e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..20).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<u8> = (0..20).map(|_| rng.random_range(0..2u8)).collect();
        let oracle: f64 = p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
            .sum::<f64>()
            / 20.0;
        assert!((loss_bce(&p, &y).unwrap() - oracle).abs() < 1e-7);
        assert!(loss_bce(&p, &y[..3]).is_err());
    }

    #[test]
    fn total_is_weighted_sum() {
        let cfg = TrainConfig::default();
        let p = |m, c, b| LossParts { mag: m, comp: c, bce: b };
        assert!((total_loss(&cfg, &p(1.0, 1.0, Some(0.0))) - 1.0).abs() < 1e-15);
        assert_eq!(total_loss(&cfg, &p(0.0, 0.0, None)), 0.0);
        assert_eq!(total_loss(&cfg, &p(2.0, 0.0, None)), 2.0 * total_loss(&cfg, &p(1.0, 0.0, None)));
        assert_eq!(total_loss(&cfg, &p(0.0, 0.0, Some(3.0))), 3.0);
    }

    #[test]
    fn spectral_gradient_matches_differences() {
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_mat(&mut rng, 3, 4, 0.0, 1.0);
        let cs = rand_mat(&mut rng, 3, 4, -1.0, 1.0);
        let e = rand_mat(&mut rng, 3, 4, 0.0, 1.0);
        let total = |e: &Matrix| {
            let (m, c, _) = spectral_terms(&cfg, &a, &cs, e);
            cfg.lambda1 * m + cfg.lambda2 * c
        };
        let (_, _, g) = spectral_terms(&cfg, &a, &cs, &e);
        for i in 0..12 {
            let (mut p, mut q) = (e.clone(), e.clone());
            p.data_mut()[i] += 1e-6;
            q.data_mut()[i] -= 1e-6;
            let fd = (total(&p) - total(&q)) / 2e-6;
            assert!((fd - g.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn bce_gradient_matches_differences() {
        let p = [0.2, 0.7, 0.45];
        let y = [1u8, 0, 1];
        let (_, g) = bce_terms(&p, &y);
        for i in 0..3 {
            let (mut a, mut b) = (p, p);
            a[i] += 1e-7;
            b[i] -= 1e-7;
            let fd = (loss_bce(&a, &y).unwrap() - loss_bce(&b, &y).unwrap()) / 2e-7;
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }
}
