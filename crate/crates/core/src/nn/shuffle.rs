use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

/// Sub-pixel rearrangement along frequency:
/// `out(b, c, t, f·r + j) = in(b, c·r + j, t, f)`.
pub fn subpixel_shuffle_freq(x: &FeatureMap, r: usize) -> Result<FeatureMap> {
    let [nb, nc, nt, nf] = x.dims();
    if r == 0 || nc % r != 0 {
        return Err(Error::Config(format!(
            "subpixel shuffle: channels {nc} not divisible by factor {r}"
        )));
    }
    let co = nc / r;
    let mut out = FeatureMap::zeros(nb, co, nt, nf * r);
    for b in 0..nb {
        for c in 0..co {
            for t in 0..nt {
                for j in 0..r {
                    let src = x.freq_row(b, c * r + j, t);
                    let dst = out.freq_row_mut(b, c, t);
                    for (f, &v) in src.iter().enumerate() {
                        dst[f * r + j] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`subpixel_shuffle_freq`]; also its adjoint, hence its backward.
pub fn subpixel_unshuffle_freq(x: &FeatureMap, r: usize) -> Result<FeatureMap> {
    let [nb, nc, nt, nf] = x.dims();
    if r == 0 || nf % r != 0 {
        return Err(Error::Config(format!(
            "subpixel unshuffle: freqs {nf} not divisible by factor {r}"
        )));
    }
    let fo = nf / r;
    let mut out = FeatureMap::zeros(nb, nc * r, nt, fo);
    for b in 0..nb {
        for c in 0..nc {
            for t in 0..nt {
                let src = x.freq_row(b, c, t).to_vec();
                for j in 0..r {
                    let dst = out.freq_row_mut(b, c * r + j, t);
                    for (f, d) in dst.iter_mut().enumerate() {
                        *d = src[f * r + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn factor_one_is_identity() {
        let x = FeatureMap::from_fn([1, 2, 3, 4], |_, c, t, f| (c * 12 + t * 4 + f) as f64);
        assert_eq!(subpixel_shuffle_freq(&x, 1).unwrap(), x);
    }

    #[test]
    fn enumerated_interleaving() {
        // C=3, F=2: channel j holds values 10j + f
        let x = FeatureMap::from_fn([1, 3, 1, 2], |_, c, _, f| (10 * c + f) as f64);
        let y = subpixel_shuffle_freq(&x, 3).unwrap();
        assert_eq!(y.dims(), [1, 1, 1, 6]);
        assert_eq!(y.freq_row(0, 0, 0), &[0.0, 10.0, 20.0, 1.0, 11.0, 21.0]);
    }

    #[test]
    fn indivisible_channels_error() {
        let x = FeatureMap::zeros(1, 4, 1, 2);
        assert!(subpixel_shuffle_freq(&x, 3).is_err());
    }

    proptest! {
        #[test]
        fn shuffle_is_a_bijection(c in 1usize..4, r in 1usize..4, t in 1usize..4, f in 1usize..6, seed in 0u64..1000) {
            let x = FeatureMap::from_fn([1, c * r, t, f], |_, ci, ti, fi| {
                ((seed as usize * 31 + ci * 17 + ti * 7 + fi) % 97) as f64 - 48.0
            });
            let y = subpixel_shuffle_freq(&x, r).unwrap();
            prop_assert_eq!(y.sum_sq(), x.sum_sq());
            prop_assert_eq!(subpixel_unshuffle_freq(&y, r).unwrap(), x);
        }
    }
}
