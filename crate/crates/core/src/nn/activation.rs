use crate::error::{check_dim, Result};
use crate::tensor::FeatureMap;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

#[inline]
pub fn mish_grad(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

pub fn mish_forward(x: &FeatureMap) -> FeatureMap {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = mish(*v));
    y
}

pub fn mish_backward(x: &FeatureMap, grad_out: &FeatureMap) -> Result<FeatureMap> {
    grad_out.check_same("mish_backward", x)?;
    let mut g = grad_out.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data()) {
        *gi *= mish_grad(xi);
    }
    Ok(g)
}

/// PReLU with one slope per channel.
pub fn prelu_forward(x: &FeatureMap, slope: &[f64]) -> Result<FeatureMap> {
    check_dim("prelu", "slope_len", x.channels(), slope.len())?;
    let [nb, nc, nt, _] = x.dims();
    let mut y = x.clone();
    for b in 0..nb {
        for (c, &a) in slope.iter().enumerate().take(nc) {
            for t in 0..nt {
                for v in y.freq_row_mut(b, c, t) {
                    if *v < 0.0 {
                        *v *= a;
                    }
                }
            }
        }
    }
    Ok(y)
}

pub struct PreluGrads {
    pub input: FeatureMap,
    pub slope: Vec<f64>,
}

pub fn prelu_backward(x: &FeatureMap, slope: &[f64], grad_out: &FeatureMap) -> Result<PreluGrads> {
    check_dim("prelu_backward", "slope_len", x.channels(), slope.len())?;
    grad_out.check_same("prelu_backward", x)?;
    let [nb, nc, nt, _] = x.dims();
    let mut gx = grad_out.clone();
    let mut gs = vec![0.0; nc];
    for b in 0..nb {
        for c in 0..nc {
            for t in 0..nt {
                let xs = x.freq_row(b, c, t);
                let gr = gx.freq_row_mut(b, c, t);
                for (g, &xv) in gr.iter_mut().zip(xs) {
                    if xv < 0.0 {
                        gs[c] += *g * xv;
                        *g *= slope[c];
                    }
                }
            }
        }
    }
    Ok(PreluGrads {
        input: gx,
        slope: gs,
    })
}

/// Learnable sigmoid `β · σ(α_f · x)` with one slope per frequency bin and a
/// fixed ceiling `β`.
pub fn lsigmoid_forward(x: &FeatureMap, alpha: &[f64], beta: f64) -> Result<FeatureMap> {
    check_dim("lsigmoid", "alpha_len", x.freqs(), alpha.len())?;
    let [nb, nc, nt, _] = x.dims();
    let mut y = x.clone();
    for b in 0..nb {
        for c in 0..nc {
            for t in 0..nt {
                for (v, &a) in y.freq_row_mut(b, c, t).iter_mut().zip(alpha) {
                    *v = beta * sigmoid(a * *v);
                }
            }
        }
    }
    Ok(y)
}

pub struct LsigmoidGrads {
    pub input: FeatureMap,
    pub alpha: Vec<f64>,
}

pub fn lsigmoid_backward(
    x: &FeatureMap,
    alpha: &[f64],
    beta: f64,
    grad_out: &FeatureMap,
) -> Result<LsigmoidGrads> {
    check_dim("lsigmoid_backward", "alpha_len", x.freqs(), alpha.len())?;
    grad_out.check_same("lsigmoid_backward", x)?;
    let [nb, nc, nt, nf] = x.dims();
    let mut gx = grad_out.clone();
    let mut ga = vec![0.0; nf];
    for b in 0..nb {
        for c in 0..nc {
            for t in 0..nt {
                let xs = x.freq_row(b, c, t);
                let gr = gx.freq_row_mut(b, c, t);
                for f in 0..nf {
                    let s = sigmoid(alpha[f] * xs[f]);
                    let d = gr[f] * beta * s * (1.0 - s);
                    ga[f] += d * xs[f];
                    gr[f] = d * alpha[f];
                }
            }
        }
    }
    Ok(LsigmoidGrads {
        input: gx,
        alpha: ga,
    })
}
