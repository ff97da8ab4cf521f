use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};

/// Frames of hang-over added on both sides of every noisy frame.
pub const DEFAULT_HANGOVER: usize = 3;

/// Rising half of the raised-cosine crossfade at position `i` of `len`.
/// The falling half is `1 - fade_in`, so the pair sums to one.
#[inline]
pub fn fade_in(i: usize, len: usize) -> f64 {
    let s = (PI * (i as f64 + 0.5) / (2.0 * len as f64)).sin();
    s * s
}

#[inline]
pub fn fade_out(i: usize, len: usize) -> f64 {
    let c = (PI * (i as f64 + 0.5) / (2.0 * len as f64)).cos();
    c * c
}

/// Marks every frame within `hangover` frames of a flagged frame.
pub fn dilate(flags: &[u8], hangover: usize) -> Vec<u8> {
    let n = flags.len();
    let mut out = vec![0u8; n];
    for (t, _) in flags.iter().enumerate().filter(|(_, &f)| f != 0) {
        let lo = t.saturating_sub(hangover);
        let hi = (t + hangover + 1).min(n);
        out[lo..hi].iter_mut().for_each(|v| *v = 1);
    }
    out
}

/// Weight of the enhanced signal at offset `i` of the hop-long segment whose
/// frame flag is `cur`, following a segment flagged `prev`.
#[inline]
pub(crate) fn gate_weight(prev: u8, cur: u8, i: usize, hop: usize) -> f64 {
    match (prev != 0, cur != 0) {
        (false, false) => 0.0,
        (true, true) => 1.0,
        (false, true) => fade_in(i, hop),
        (true, false) => fade_out(i, hop),
    }
}

/// Mixes one segment: exact passthrough where the weight is 0, exact
/// enhanced signal where it is 1.
pub(crate) fn splice_segment(prev: u8, cur: u8, x: &[f64], enhanced: &[f64], hop: usize, out: &mut Vec<f64>) {
    for (i, (&a, &b)) in x.iter().zip(enhanced).enumerate() {
        let g = gate_weight(prev, cur, i, hop);
        out.push(if g == 0.0 {
            a
        } else if g == 1.0 {
            b
        } else {
            (1.0 - g) * a + g * b
        });
    }
}

/// Joins the raw signal and its enhanced version under per-frame noise
/// flags. Sample segment `[t·hop, (t+1)·hop)` follows the dilated flag of
/// frame `t`; each change of flag is crossfaded over the first hop of the
/// new segment.
pub fn gate_and_splice(x: &[f64], flags: &[u8], enhanced: &[f64], hop: usize, hangover: usize) -> Result<Vec<f64>> {
    check_dim("gate_and_splice", "samples", x.len(), enhanced.len())?;
    if hop == 0 {
        return Err(Error::Config("hop must be positive".into()));
    }
    let segments = x.len().div_ceil(hop);
    if flags.len() < segments {
        return Err(Error::Shape {
            context: "gate_and_splice",
            dim: "frames",
            expected: segments,
            found: flags.len(),
        });
    }
    let d = dilate(flags, hangover);
    let mut out = Vec::with_capacity(x.len());
    for s in 0..segments {
        let prev = if s == 0 { d[0] } else { d[s - 1] };
        let (a, b) = (s * hop, ((s + 1) * hop).min(x.len()));
        splice_segment(prev, d[s], &x[a..b], &enhanced[a..b], hop, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fades_are_complementary() {
        for len in [16, 256] {
            for i in 0..len {
                assert!((fade_in(i, len) + fade_out(i, len) - 1.0).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn dilation() {
        assert_eq!(dilate(&[0, 0, 0, 1, 0, 0, 0, 0, 0], 2), vec![0, 1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(dilate(&[1, 0, 0], 3), vec![1, 1, 1]);
        assert!(dilate(&[], 3).is_empty());
    }

    #[test]
    fn passthrough_and_full() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.1).sin()).collect();
        let e: Vec<f64> = x.iter().map(|v| v * 0.5 + 0.1).collect();
        assert_eq!(gate_and_splice(&x, &[0; 5], &e, 256, 3).unwrap(), x);
        assert_eq!(gate_and_splice(&x, &[1; 5], &e, 256, 3).unwrap(), e);
        assert!(gate_and_splice(&x, &[1; 5], &e[..999], 256, 3).is_err());
        assert!(gate_and_splice(&x, &[1; 2], &e, 256, 3).is_err());
    }

    #[test]
    fn island_weights_sum_to_one() {
        let hop = 16;
        let n = 20 * hop;
        let ones = vec![1.0; n];
        let zeros = vec![0.0; n];
        let mut flags = vec![0u8; 21];
        flags[10] = 1;
        // weight on the enhanced branch and on the raw branch, measured separately
        let w_enh = gate_and_splice(&zeros, &flags, &ones, hop, 3).unwrap();
        let w_raw = gate_and_splice(&ones, &flags, &zeros, hop, 3).unwrap();
        for (a, b) in w_enh.iter().zip(&w_raw) {
            assert!((a + b - 1.0).abs() <= 1e-7);
        }
        assert_eq!(w_enh[5 * hop], 0.0);
        assert!(w_enh[7 * hop] > 0.0 && w_enh[7 * hop] < 1.0);
        assert_eq!(w_enh[10 * hop], 1.0);
        assert!(w_enh[14 * hop] > 0.0 && w_enh[14 * hop] < 1.0);
        assert_eq!(w_enh[16 * hop], 0.0);
    }
}
