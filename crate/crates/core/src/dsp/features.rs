use std::f64::consts::PI;

use super::StftConfig;
use crate::error::{check_dim, Error, Result};
use crate::tensor::Matrix;

/// Wrap to (−π, π].
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Elementwise `mag^c`.
pub fn power_compress(mag: &Matrix, c: f64) -> Result<Matrix> {
    check_exponent(c)?;
    if let Some(i) = mag.data().iter().position(|&m| m < 0.0 || m.is_nan()) {
        return Err(Error::NegativeMagnitude(i));
    }
    Ok(mag.map(|m| m.powf(c)))
}

/// Elementwise `mag^(1/c)`.
pub fn power_decompress(mag: &Matrix, c: f64) -> Result<Matrix> {
    check_exponent(c)?;
    if let Some(i) = mag.data().iter().position(|&m| m < 0.0 || m.is_nan()) {
        return Err(Error::NegativeMagnitude(i));
    }
    Ok(mag.map(|m| m.powf(1.0 / c)))
}

fn check_exponent(c: f64) -> Result<()> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("compression exponent {c} outside (0, 1]")))
    }
}

/// Frequency-axis and baseband time-axis phase differences.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiffs {
    pub df: Matrix,
    pub dt: Matrix,
}

/// `df(t,f) = wrap(P(t,f) − P(t,f−1))`, `dt(t,f) = wrap(P(t,f) − P(t−1,f) − 2πf·hop/fft_len)`.
/// The out-of-range boundaries `df(t,0)` and `dt(0,f)` are zero.
pub fn phase_diffs(phase: &Matrix, cfg: &StftConfig) -> Result<PhaseDiffs> {
    check_dim("phase_diffs", "bins", cfg.bins(), phase.cols())?;
    let (nt, nf) = (phase.rows(), phase.cols());
    let mut df = Matrix::zeros(nt, nf);
    let mut dt = Matrix::zeros(nt, nf);
    let advance = 2.0 * PI * cfg.hop as f64 / cfg.fft_len as f64;
    for t in 0..nt {
        let prev = if t > 0 { Some(phase.row(t - 1)) } else { None };
        baseband_row(phase.row(t), prev, advance, df.row_mut(t), dt.row_mut(t));
    }
    Ok(PhaseDiffs { df, dt })
}

/// One frame of [`phase_diffs`]; used by the streaming front end.
pub(crate) fn baseband_row(
    cur: &[f64],
    prev: Option<&[f64]>,
    advance: f64,
    df: &mut [f64],
    dt: &mut [f64],
) {
    df[0] = 0.0;
    for f in 1..cur.len() {
        df[f] = wrap_phase(cur[f] - cur[f - 1]);
    }
    match prev {
        Some(prev) => {
            for f in 0..cur.len() {
                dt[f] = wrap_phase(cur[f] - prev[f] - advance * f as f64);
            }
        }
        None => dt.iter_mut().for_each(|v| *v = 0.0),
    }
}
