//! Layer kernels with hand-written backward passes.
//!
//! Each kernel exists as a free function pair (`*_forward` / `*_backward`).
//! [`Layer`] wraps them behind one interface so that a network can record a
//! tape of caches during the forward pass and replay it through
//! [`layer_backward`].

pub mod activation;
pub mod conv;
pub mod gru;
pub mod init;
pub mod linear;
pub mod norm;
pub mod shuffle;

pub use activation::{lsigmoid_forward, mish, mish_forward, prelu_forward, sigmoid};
pub use conv::{conv2d_backward, conv2d_forward, dwconv_backward, dwconv_forward, ConvGrads, ConvSpec};
pub use gru::{bigru_backward, bigru_forward, gru_backward, gru_sequence, gru_step, GruSpec, GruWeights};
pub use linear::{linear_backward, linear_forward};
pub use norm::{layer_norm_backward, layer_norm_forward, LayerNormAxes, LAYER_NORM_EPS};
pub use shuffle::{subpixel_shuffle_freq, subpixel_unshuffle_freq};

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Matrix};

/// Value flowing between layers: a 4-D map or a stack of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Map(FeatureMap),
    Rows(Matrix),
}

impl Activation {
    pub fn as_map(&self) -> Result<&FeatureMap> {
        match self {
            Self::Map(m) => Ok(m),
            Self::Rows(_) => Err(Error::Config("expected a feature map, found rows".into())),
        }
    }

    pub fn as_rows(&self) -> Result<&Matrix> {
        match self {
            Self::Rows(m) => Ok(m),
            Self::Map(_) => Err(Error::Config("expected rows, found a feature map".into())),
        }
    }

    pub fn into_map(self) -> Result<FeatureMap> {
        match self {
            Self::Map(m) => Ok(m),
            Self::Rows(_) => Err(Error::Config("expected a feature map, found rows".into())),
        }
    }

    pub fn into_rows(self) -> Result<Matrix> {
        match self {
            Self::Rows(m) => Ok(m),
            Self::Map(_) => Err(Error::Config("expected rows, found a feature map".into())),
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            Self::Map(m) => m.data(),
            Self::Rows(m) => m.data(),
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Self::Map(m) => m.data_mut(),
            Self::Rows(m) => m.data_mut(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    DwConv,
    Shuffle,
    LayerNorm,
    Prelu,
    Mish,
    Sigmoid,
    Lsigmoid,
    Linear,
    Gru,
    BiGru,
}

/// A layer with borrowed parameters.
#[derive(Debug, Clone, Copy)]
pub enum Layer<'a> {
    Conv2d {
        spec: ConvSpec,
        weight: &'a [f64],
        bias: Option<&'a [f64]>,
    },
    DwConv {
        kernel: (usize, usize),
        weight: &'a [f64],
        bias: Option<&'a [f64]>,
    },
    Shuffle {
        factor: usize,
    },
    LayerNorm {
        axes: LayerNormAxes,
        gamma: &'a [f64],
        beta: &'a [f64],
    },
    Prelu {
        slope: &'a [f64],
    },
    Mish,
    Sigmoid,
    Lsigmoid {
        alpha: &'a [f64],
        beta: f64,
    },
    Linear {
        weight: &'a [f64],
        bias: Option<&'a [f64]>,
        out_dim: usize,
    },
    /// Rows hold `rows / seq_len` independent sequences of `seq_len` steps.
    /// `h0`, when present, has one row per sequence.
    Gru {
        spec: GruSpec,
        weights: GruWeights<'a>,
        seq_len: usize,
        h0: Option<&'a Matrix>,
    },
    BiGru {
        spec: GruSpec,
        fwd: GruWeights<'a>,
        bwd: GruWeights<'a>,
        seq_len: usize,
    },
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(Activation),
    Output(Activation),
    Shuffle,
    LayerNorm(norm::LayerNormCache),
    Gru(Vec<gru::GruCache>),
    BiGru(Vec<gru::BiGruCache>),
}

/// Gradients from one layer. `params` follows the layer's parameter order:
/// weight then bias; gamma then beta; `w_ih, w_hh, b_ih, b_hh` (forward
/// direction first for Bi-GRU).
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub input: Activation,
    pub params: Vec<Vec<f64>>,
}

fn sequences(rows: usize, seq_len: usize) -> Result<usize> {
    if seq_len == 0 || rows % seq_len != 0 {
        return Err(Error::Config(format!(
            "recurrent layer: {rows} rows do not split into sequences of {seq_len}"
        )));
    }
    Ok(rows / seq_len)
}

fn block(m: &Matrix, start: usize, len: usize) -> Matrix {
    Matrix::from_fn(len, m.cols(), |r, c| m.get(start + r, c))
}

fn put_block(dst: &mut Matrix, start: usize, src: &Matrix) {
    for r in 0..src.rows() {
        dst.row_mut(start + r).copy_from_slice(src.row(r));
    }
}

impl Layer<'_> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Self::Conv2d { .. } => LayerKind::Conv2d,
            Self::DwConv { .. } => LayerKind::DwConv,
            Self::Shuffle { .. } => LayerKind::Shuffle,
            Self::LayerNorm { .. } => LayerKind::LayerNorm,
            Self::Prelu { .. } => LayerKind::Prelu,
            Self::Mish => LayerKind::Mish,
            Self::Sigmoid => LayerKind::Sigmoid,
            Self::Lsigmoid { .. } => LayerKind::Lsigmoid,
            Self::Linear { .. } => LayerKind::Linear,
            Self::Gru { .. } => LayerKind::Gru,
            Self::BiGru { .. } => LayerKind::BiGru,
        }
    }

    /// Runs the layer; with `keep_cache` also returns what
    /// [`layer_backward`] needs.
    pub fn forward(&self, x: &Activation, keep_cache: bool) -> Result<(Activation, Option<LayerCache>)> {
        let keep_input = || keep_cache.then(|| LayerCache::Input(x.clone()));
        match *self {
            Self::Conv2d { spec, weight, bias } => {
                let y = conv2d_forward(x.as_map()?, &spec, weight, bias)?;
                Ok((Activation::Map(y), keep_input()))
            }
            Self::DwConv { kernel, weight, bias } => {
                let y = dwconv_forward(x.as_map()?, kernel, weight, bias)?;
                Ok((Activation::Map(y), keep_input()))
            }
            Self::Shuffle { factor } => {
                let y = subpixel_shuffle_freq(x.as_map()?, factor)?;
                Ok((Activation::Map(y), keep_cache.then_some(LayerCache::Shuffle)))
            }
            Self::LayerNorm { axes, gamma, beta } => {
                let (y, c) = layer_norm_forward(x.as_map()?, gamma, beta, axes)?;
                Ok((Activation::Map(y), keep_cache.then_some(LayerCache::LayerNorm(c))))
            }
            Self::Prelu { slope } => Ok((Activation::Map(prelu_forward(x.as_map()?, slope)?), keep_input())),
            Self::Mish => Ok((Activation::Map(mish_forward(x.as_map()?)), keep_input())),
            Self::Sigmoid => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
                let cache = keep_cache.then(|| LayerCache::Output(y.clone()));
                Ok((y, cache))
            }
            Self::Lsigmoid { alpha, beta } => {
                Ok((Activation::Map(lsigmoid_forward(x.as_map()?, alpha, beta)?), keep_input()))
            }
            Self::Linear { weight, bias, out_dim } => {
                let y = linear_forward(x.as_rows()?, weight, bias, out_dim)?;
                Ok((Activation::Rows(y), keep_input()))
            }
            Self::Gru {
                spec,
                weights,
                seq_len,
                h0,
            } => {
                let xr = x.as_rows()?;
                let n = sequences(xr.rows(), seq_len)?;
                if let Some(h0) = h0 {
                    crate::error::check_dim("gru layer", "initial_states", n, h0.rows())?;
                }
                let mut y = Matrix::zeros(xr.rows(), spec.hidden);
                let mut caches = Vec::with_capacity(if keep_cache { n } else { 0 });
                for s in 0..n {
                    let xs = block(xr, s * seq_len, seq_len);
                    let (ys, c) = gru_sequence(&spec, &weights, &xs, h0.map(|h| h.row(s)))?;
                    put_block(&mut y, s * seq_len, &ys);
                    if keep_cache {
                        caches.push(c);
                    }
                }
                Ok((Activation::Rows(y), keep_cache.then_some(LayerCache::Gru(caches))))
            }
            Self::BiGru { spec, fwd, bwd, seq_len } => {
                let xr = x.as_rows()?;
                let n = sequences(xr.rows(), seq_len)?;
                let mut y = Matrix::zeros(xr.rows(), 2 * spec.hidden);
                let mut caches = Vec::with_capacity(if keep_cache { n } else { 0 });
                for s in 0..n {
                    let xs = block(xr, s * seq_len, seq_len);
                    let (ys, c) = bigru_forward(&spec, &fwd, &bwd, &xs)?;
                    put_block(&mut y, s * seq_len, &ys);
                    if keep_cache {
                        caches.push(c);
                    }
                }
                Ok((Activation::Rows(y), keep_cache.then_some(LayerCache::BiGru(caches))))
            }
        }
    }
}

fn wrong_cache(kind: LayerKind) -> Error {
    Error::Config(format!("cache does not belong to a {kind:?} layer"))
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Analytic gradients of one layer given its forward cache.
pub fn layer_backward(layer: &Layer, cache: Option<&LayerCache>, grad_out: &Activation) -> Result<LayerGrads> {
    let kind = layer.kind();
    let cache = cache.ok_or(Error::MissingCache(match kind {
        LayerKind::Conv2d => "conv2d",
        LayerKind::DwConv => "dwconv",
        LayerKind::Shuffle => "subpixel shuffle",
        LayerKind::LayerNorm => "layer norm",
        LayerKind::Prelu => "prelu",
        LayerKind::Mish => "mish",
        LayerKind::Sigmoid => "sigmoid",
        LayerKind::Lsigmoid => "lsigmoid",
        LayerKind::Linear => "linear",
        LayerKind::Gru => "gru",
        LayerKind::BiGru => "bigru",
    }))?;
    let input = |c: &LayerCache| match c {
        LayerCache::Input(a) => Ok(a.clone()),
        _ => Err(wrong_cache(kind)),
    };
    match (*layer, cache) {
        (Layer::Conv2d { spec, weight, .. }, c) => {
            let x = input(c)?.into_map()?;
            let g = conv2d_backward(&x, &spec, weight, grad_out.as_map()?)?;
            let mut params = vec![g.weight];
            params.extend(g.bias);
            Ok(LayerGrads {
                input: Activation::Map(g.input),
                params,
            })
        }
        (Layer::DwConv { kernel, weight, bias }, c) => {
            let x = input(c)?.into_map()?;
            let g = dwconv_backward(&x, kernel, weight, bias.is_some(), grad_out.as_map()?)?;
            let mut params = vec![g.weight];
            params.extend(g.bias);
            Ok(LayerGrads {
                input: Activation::Map(g.input),
                params,
            })
        }
        (Layer::Shuffle { factor }, LayerCache::Shuffle) => Ok(LayerGrads {
            input: Activation::Map(subpixel_unshuffle_freq(grad_out.as_map()?, factor)?),
            params: vec![],
        }),
        (Layer::LayerNorm { gamma, .. }, LayerCache::LayerNorm(c)) => {
            let g = layer_norm_backward(c, gamma, grad_out.as_map()?)?;
            Ok(LayerGrads {
                input: Activation::Map(g.input),
                params: vec![g.gamma, g.beta],
            })
        }
        (Layer::Prelu { slope }, c) => {
            let x = input(c)?.into_map()?;
            let g = activation::prelu_backward(&x, slope, grad_out.as_map()?)?;
            Ok(LayerGrads {
                input: Activation::Map(g.input),
                params: vec![g.slope],
            })
        }
        (Layer::Mish, c) => {
            let x = input(c)?.into_map()?;
            Ok(LayerGrads {
                input: Activation::Map(activation::mish_backward(&x, grad_out.as_map()?)?),
                params: vec![],
            })
        }
        (Layer::Sigmoid, LayerCache::Output(y)) => {
            if y.data().len() != grad_out.data().len() {
                return Err(Error::Config("sigmoid backward: gradient size mismatch".into()));
            }
            let mut g = grad_out.clone();
            for (gi, &s) in g.data_mut().iter_mut().zip(y.data()) {
                *gi *= s * (1.0 - s);
            }
            Ok(LayerGrads { input: g, params: vec![] })
        }
        (Layer::Lsigmoid { alpha, beta }, c) => {
            let x = input(c)?.into_map()?;
            let g = activation::lsigmoid_backward(&x, alpha, beta, grad_out.as_map()?)?;
            Ok(LayerGrads {
                input: Activation::Map(g.input),
                params: vec![g.alpha],
            })
        }
        (Layer::Linear { weight, bias, .. }, c) => {
            let x = input(c)?.into_rows()?;
            let g = linear_backward(&x, weight, bias.is_some(), grad_out.as_rows()?)?;
            let mut params = vec![g.weight];
            params.extend(g.bias);
            Ok(LayerGrads {
                input: Activation::Rows(g.input),
                params,
            })
        }
        (Layer::Gru { spec, weights, seq_len, .. }, LayerCache::Gru(caches)) => {
            let go = grad_out.as_rows()?;
            let n = sequences(go.rows(), seq_len)?;
            crate::error::check_dim("gru backward", "sequences", caches.len(), n)?;
            let mut gx = Matrix::zeros(go.rows(), spec.input);
            let [s0, s1, s2, s3] = spec.shapes().map(|s| s.iter().product::<usize>());
            let mut params = vec![vec![0.0; s0], vec![0.0; s1], vec![0.0; s2], vec![0.0; s3]];
            for (s, c) in caches.iter().enumerate() {
                let g = gru_backward(&spec, &weights, c, &block(go, s * seq_len, seq_len))?;
                put_block(&mut gx, s * seq_len, &g.input);
                for (acc, part) in params.iter_mut().zip([&g.w_ih, &g.w_hh, &g.b_ih, &g.b_hh]) {
                    add_into(acc, part);
                }
            }
            Ok(LayerGrads {
                input: Activation::Rows(gx),
                params,
            })
        }
        (Layer::BiGru { spec, fwd, bwd, seq_len }, LayerCache::BiGru(caches)) => {
            let go = grad_out.as_rows()?;
            let n = sequences(go.rows(), seq_len)?;
            crate::error::check_dim("bigru backward", "sequences", caches.len(), n)?;
            let mut gx = Matrix::zeros(go.rows(), spec.input);
            let sizes = spec.shapes().map(|s| s.iter().product::<usize>());
            let mut params: Vec<Vec<f64>> = sizes.iter().chain(sizes.iter()).map(|&k| vec![0.0; k]).collect();
            for (s, c) in caches.iter().enumerate() {
                let g = bigru_backward(&spec, &fwd, &bwd, c, &block(go, s * seq_len, seq_len))?;
                put_block(&mut gx, s * seq_len, &g.input);
                let parts = [
                    &g.fwd.w_ih, &g.fwd.w_hh, &g.fwd.b_ih, &g.fwd.b_hh, &g.bwd.w_ih, &g.bwd.w_hh, &g.bwd.b_ih,
                    &g.bwd.b_hh,
                ];
                for (acc, part) in params.iter_mut().zip(parts) {
                    add_into(acc, part);
                }
            }
            Ok(LayerGrads {
                input: Activation::Rows(gx),
                params,
            })
        }
        _ => Err(wrong_cache(kind)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_cache_is_an_error() {
        let w = [1.0, 0.0, 0.0, 1.0];
        let layer = Layer::Linear {
            weight: &w,
            bias: None,
            out_dim: 2,
        };
        let g = Activation::Rows(Matrix::zeros(1, 2));
        assert!(matches!(layer_backward(&layer, None, &g), Err(Error::MissingCache(_))));
    }

    #[test]
    fn mismatched_cache_is_an_error() {
        let layer = Layer::Shuffle { factor: 1 };
        let g = Activation::Map(FeatureMap::zeros(1, 1, 1, 1));
        let c = LayerCache::Input(g.clone());
        assert!(layer_backward(&layer, Some(&c), &g).is_err());
    }
}
