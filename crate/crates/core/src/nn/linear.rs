use crate::error::{check_dim, Error, Result};
use crate::tensor::{FeatureMap, Matrix};

/// `y = x Wᵀ + b` applied row-wise; `weight` is (out, in) row-major.
pub fn linear_forward(x: &Matrix, weight: &[f64], bias: Option<&[f64]>, out_dim: usize) -> Result<Matrix> {
    let in_dim = x.cols();
    check_dim("linear", "weight_len", out_dim * in_dim, weight.len())?;
    if let Some(b) = bias {
        check_dim("linear", "bias_len", out_dim, b.len())?;
    }
    let mut y = Matrix::zeros(x.rows(), out_dim);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for (o, yo) in yr.iter_mut().enumerate() {
            let w = &weight[o * in_dim..(o + 1) * in_dim];
            let dot: f64 = w.iter().zip(xr).map(|(a, b)| a * b).sum();
            *yo = dot + bias.map_or(0.0, |b| b[o]);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Matrix,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

pub fn linear_backward(x: &Matrix, weight: &[f64], has_bias: bool, grad_out: &Matrix) -> Result<LinearGrads> {
    let in_dim = x.cols();
    let out_dim = grad_out.cols();
    check_dim("linear_backward", "weight_len", out_dim * in_dim, weight.len())?;
    check_dim("linear_backward", "rows", x.rows(), grad_out.rows())?;
    let mut gx = Matrix::zeros(x.rows(), in_dim);
    let mut gw = vec![0.0; weight.len()];
    let mut gb = has_bias.then(|| vec![0.0; out_dim]);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let gr = grad_out.row(r);
        let gxr = gx.row_mut(r);
        for (o, &g) in gr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            if let Some(gb) = gb.as_mut() {
                gb[o] += g;
            }
            let w = &weight[o * in_dim..(o + 1) * in_dim];
            let gwo = &mut gw[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                gwo[i] += g * xr[i];
                gxr[i] += g * w[i];
            }
        }
    }
    Ok(LinearGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Linear map over the channel axis at every (b, t, f) position.
pub fn linear_channels(x: &FeatureMap, weight: &[f64], bias: Option<&[f64]>, out_dim: usize) -> Result<FeatureMap> {
    let y = linear_forward(&x.to_rows(), weight, bias, out_dim)?;
    FeatureMap::from_rows(&y, x.batch(), x.frames(), x.freqs())
}

pub struct ChannelLinearGrads {
    pub input: FeatureMap,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

pub fn linear_channels_backward(
    x: &FeatureMap,
    weight: &[f64],
    has_bias: bool,
    grad_out: &FeatureMap,
) -> Result<ChannelLinearGrads> {
    if grad_out.frames() != x.frames() || grad_out.freqs() != x.freqs() || grad_out.batch() != x.batch() {
        return Err(Error::Config("linear_channels_backward: grid mismatch".into()));
    }
    let g = linear_backward(&x.to_rows(), weight, has_bias, &grad_out.to_rows())?;
    Ok(ChannelLinearGrads {
        input: FeatureMap::from_rows(&g.input, x.batch(), x.frames(), x.freqs())?,
        weight: g.weight,
        bias: g.bias,
    })
}
