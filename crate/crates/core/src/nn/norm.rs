use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::tensor::FeatureMap;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Which axes share normalization statistics. The affine parameters have the
/// shape of the normalized axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerNormAxes {
    /// Statistics over (C, F) per (b, t); affine shape C×F. Frame-local, so causal.
    ChannelFreq,
    /// Statistics over C per (b, t, f); affine shape C.
    Channel,
}

impl LayerNormAxes {
    pub fn affine_len(&self, channels: usize, freqs: usize) -> usize {
        match self {
            Self::ChannelFreq => channels * freqs,
            Self::Channel => channels,
        }
    }

    pub fn affine_shape(&self, channels: usize, freqs: usize) -> Vec<usize> {
        match self {
            Self::ChannelFreq => vec![channels, freqs],
            Self::Channel => vec![channels],
        }
    }

    /// Fills `buf` with (data index, affine index) for every group member.
    fn groups(&self, dims: [usize; 4], mut each: impl FnMut(&[(usize, usize)])) {
        let [nb, nc, nt, nf] = dims;
        let idx = |b: usize, c: usize, t: usize, f: usize| ((b * nc + c) * nt + t) * nf + f;
        let mut buf = Vec::with_capacity(nc * nf);
        for b in 0..nb {
            for t in 0..nt {
                match self {
                    Self::ChannelFreq => {
                        buf.clear();
                        for c in 0..nc {
                            for f in 0..nf {
                                buf.push((idx(b, c, t, f), c * nf + f));
                            }
                        }
                        each(&buf);
                    }
                    Self::Channel => {
                        for f in 0..nf {
                            buf.clear();
                            for c in 0..nc {
                                buf.push((idx(b, c, t, f), c));
                            }
                            each(&buf);
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub axes: LayerNormAxes,
    pub x_hat: FeatureMap,
    pub inv_std: Vec<f64>,
}

fn check_affine(x: &FeatureMap, gamma: &[f64], beta: &[f64], axes: LayerNormAxes) -> Result<()> {
    let n = axes.affine_len(x.channels(), x.freqs());
    check_dim("layer_norm", "gamma_len", n, gamma.len())?;
    check_dim("layer_norm", "beta_len", n, beta.len())
}

pub fn layer_norm_forward(
    x: &FeatureMap,
    gamma: &[f64],
    beta: &[f64],
    axes: LayerNormAxes,
) -> Result<(FeatureMap, LayerNormCache)> {
    check_affine(x, gamma, beta, axes)?;
    let src = x.data();
    let mut y = x.clone();
    let mut x_hat = x.clone();
    let mut inv_std = Vec::new();
    {
        let yd = y.data_mut();
        let xh = x_hat.data_mut();
        axes.groups(x.dims(), |members| {
            let n = members.len() as f64;
            let mean = members.iter().map(|&(i, _)| src[i]).sum::<f64>() / n;
            let var = members
                .iter()
                .map(|&(i, _)| (src[i] - mean).powi(2))
                .sum::<f64>()
                / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for &(i, a) in members {
                let h = (src[i] - mean) * is;
                xh[i] = h;
                yd[i] = gamma[a] * h + beta[a];
            }
            inv_std.push(is);
        });
    }
    Ok((
        y,
        LayerNormCache {
            axes,
            x_hat,
            inv_std,
        },
    ))
}

pub struct LayerNormGrads {
    pub input: FeatureMap,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    grad_out: &FeatureMap,
) -> Result<LayerNormGrads> {
    grad_out.check_same("layer_norm_backward", &cache.x_hat)?;
    let axes = cache.axes;
    let n_aff = axes.affine_len(grad_out.channels(), grad_out.freqs());
    check_dim("layer_norm_backward", "gamma_len", n_aff, gamma.len())?;
    let mut gx = FeatureMap::zeros(
        grad_out.batch(),
        grad_out.channels(),
        grad_out.frames(),
        grad_out.freqs(),
    );
    let mut gg = vec![0.0; n_aff];
    let mut gbeta = vec![0.0; n_aff];
    let xh = cache.x_hat.data();
    let dy = grad_out.data();
    let mut group = 0;
    {
        let gxd = gx.data_mut();
        axes.groups(grad_out.dims(), |members| {
            let n = members.len() as f64;
            let is = cache.inv_std[group];
            group += 1;
            let mut sum_d = 0.0;
            let mut sum_dx = 0.0;
            for &(i, a) in members {
                let d = dy[i] * gamma[a];
                gg[a] += dy[i] * xh[i];
                gbeta[a] += dy[i];
                sum_d += d;
                sum_dx += d * xh[i];
            }
            for &(i, a) in members {
                let d = dy[i] * gamma[a];
                gxd[i] = is / n * (n * d - sum_d - xh[i] * sum_dx);
            }
        });
    }
    Ok(LayerNormGrads {
        input: gx,
        gamma: gg,
        beta: gbeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(dims: [usize; 4], seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_fn(dims, |_, _, _, _| rng.random_range(-3.0..5.0))
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = FeatureMap::from_fn([1, 2, 3, 4], |_, _, _, _| 4.2);
        for axes in [LayerNormAxes::ChannelFreq, LayerNormAxes::Channel] {
            let n = axes.affine_len(2, 4);
            let (y, _) = layer_norm_forward(&x, &vec![1.0; n], &vec![0.0; n], axes).unwrap();
            assert!(y.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn normalized_moments() {
        let x = random_map([2, 3, 4, 5], 1);
        let (y, _) = layer_norm_forward(&x, &[1.0; 15], &[0.0; 15], LayerNormAxes::ChannelFreq).unwrap();
        for b in 0..2 {
            for t in 0..4 {
                let vals: Vec<f64> = (0..3)
                    .flat_map(|c| y.freq_row(b, c, t).to_vec())
                    .collect();
                let mean = vals.iter().sum::<f64>() / 15.0;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 15.0;
                assert!(mean.abs() <= 1e-6);
                assert!((var - 1.0).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn matches_two_pass_reference_over_channels() {
        let x = random_map([1, 4, 3, 6], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gamma: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..1.5)).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (y, _) = layer_norm_forward(&x, &gamma, &beta, LayerNormAxes::Channel).unwrap();
        for t in 0..3 {
            for f in 0..6 {
                let v: Vec<f64> = (0..4).map(|c| x.get(0, c, t, f)).collect();
                let mean = v.iter().sum::<f64>() / 4.0;
                let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 4.0;
                for c in 0..4 {
                    let r = gamma[c] * (v[c] - mean) / (var + 1e-5).sqrt() + beta[c];
                    assert!((y.get(0, c, t, f) - r).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn affine_shape_is_checked() {
        let x = random_map([1, 2, 2, 3], 4);
        assert!(layer_norm_forward(&x, &[1.0; 2], &[0.0; 2], LayerNormAxes::ChannelFreq).is_err());
    }
}
