use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::tensor::FeatureMap;

/// 2-D convolution over (time, frequency). Time padding is causal: only
/// `pad_t` past frames are zero-padded, never future ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride_f: usize,
    pub pad_t: usize,
    pub pad_f: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Stride 1, causal time padding `kt - 1`, "same" frequency padding.
    pub fn new(in_ch: usize, out_ch: usize, kernel: (usize, usize)) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride_f: 1,
            pad_t: kernel.0.saturating_sub(1),
            pad_f: kernel.1 / 2,
            groups: 1,
            bias: true,
        }
    }

    pub fn depthwise(channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            groups: channels,
            ..Self::new(channels, channels, kernel)
        }
    }

    pub fn with_stride_f(mut self, s: usize) -> Self {
        self.stride_f = s;
        self
    }

    pub fn with_pad_f(mut self, p: usize) -> Self {
        self.pad_f = p;
        self
    }

    pub fn with_pad_t(mut self, p: usize) -> Self {
        self.pad_t = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (kt, kf) = self.kernel;
        if kt == 0 || kf == 0 {
            return Err(Error::Config("conv kernel dims must be ≥ 1".into()));
        }
        if !(1..=3).contains(&self.stride_f) {
            return Err(Error::Config(format!(
                "frequency stride {} not in {{1, 2, 3}}",
                self.stride_f
            )));
        }
        if self.groups == 0 || self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return Err(Error::Config(format!(
                "groups {} must divide in_ch {} and out_ch {}",
                self.groups, self.in_ch, self.out_ch
            )));
        }
        Ok(())
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * (self.in_ch / self.groups) * self.kernel.0 * self.kernel.1
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![
            self.out_ch,
            self.in_ch / self.groups,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.bias { self.out_ch } else { 0 }
    }

    pub fn out_frames(&self, frames: usize) -> Option<usize> {
        (frames + self.pad_t + 1).checked_sub(self.kernel.0)
    }

    pub fn out_freqs(&self, freqs: usize) -> Option<usize> {
        (freqs + 2 * self.pad_f)
            .checked_sub(self.kernel.1)
            .map(|v| v / self.stride_f + 1)
    }

    /// Multiply-accumulates to produce one output frame.
    pub fn macs_per_frame(&self, in_freqs: usize) -> usize {
        let fo = self.out_freqs(in_freqs).unwrap_or(0);
        self.out_ch * fo * (self.in_ch / self.groups) * self.kernel.0 * self.kernel.1
    }
}

/// Output index range `[lo, hi)` for which `fo*stride + df - pad` lands in `[0, freqs)`.
#[inline]
fn valid_out_range(df: usize, pad: usize, stride: usize, freqs: usize, f_out: usize) -> (usize, usize) {
    let lo = if pad > df { (pad - df).div_ceil(stride) } else { 0 };
    let hi = if freqs + pad > df {
        ((freqs - 1 + pad - df) / stride + 1).min(f_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

struct Geometry {
    t_out: usize,
    f_out: usize,
    cin_g: usize,
    cout_g: usize,
}

fn geometry(x: &FeatureMap, spec: &ConvSpec, weight: &[f64], bias: Option<&[f64]>) -> Result<Geometry> {
    spec.validate()?;
    check_dim("conv2d", "in_channels", spec.in_ch, x.channels())?;
    check_dim("conv2d", "weight_len", spec.weight_len(), weight.len())?;
    match (spec.bias, bias) {
        (true, Some(b)) => check_dim("conv2d", "bias_len", spec.out_ch, b.len())?,
        (false, None) => {}
        (true, None) => return Err(Error::Config("conv2d: bias expected".into())),
        (false, Some(_)) => return Err(Error::Config("conv2d: unexpected bias".into())),
    }
    let t_out = spec
        .out_frames(x.frames())
        .filter(|&t| t > 0)
        .ok_or(Error::Shape {
            context: "conv2d",
            dim: "frames",
            expected: spec.kernel.0,
            found: x.frames() + spec.pad_t,
        })?;
    let f_out = spec
        .out_freqs(x.freqs())
        .ok_or(Error::Shape {
            context: "conv2d",
            dim: "freqs",
            expected: spec.kernel.1,
            found: x.freqs() + 2 * spec.pad_f,
        })?;
    Ok(Geometry {
        t_out,
        f_out,
        cin_g: spec.in_ch / spec.groups,
        cout_g: spec.out_ch / spec.groups,
    })
}

/// Cross-correlation with weights laid out (out_ch, in_ch/groups, kt, kf).
pub fn conv2d_forward(
    x: &FeatureMap,
    spec: &ConvSpec,
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Result<FeatureMap> {
    let g = geometry(x, spec, weight, bias)?;
    let (kt, kf) = spec.kernel;
    let (nb, nt, nf) = (x.batch(), x.frames(), x.freqs());
    let mut out = FeatureMap::zeros(nb, spec.out_ch, g.t_out, g.f_out);
    for b in 0..nb {
        for o in 0..spec.out_ch {
            let group = o / g.cout_g;
            let b0 = bias.map_or(0.0, |bv| bv[o]);
            for t in 0..g.t_out {
                let row = out.freq_row_mut(b, o, t);
                row.iter_mut().for_each(|v| *v = b0);
                for ci in 0..g.cin_g {
                    let ic = group * g.cin_g + ci;
                    for dt in 0..kt {
                        let ti = t + dt;
                        if ti < spec.pad_t || ti - spec.pad_t >= nt {
                            continue;
                        }
                        let src = x.freq_row(b, ic, ti - spec.pad_t);
                        let wbase = ((o * g.cin_g + ci) * kt + dt) * kf;
                        for df in 0..kf {
                            let w = weight[wbase + df];
                            let (lo, hi) = valid_out_range(df, spec.pad_f, spec.stride_f, nf, g.f_out);
                            for (fo, r) in row.iter_mut().enumerate().take(hi).skip(lo) {
                                *r += w * src[fo * spec.stride_f + df - spec.pad_f];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: FeatureMap,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

pub fn conv2d_backward(
    x: &FeatureMap,
    spec: &ConvSpec,
    weight: &[f64],
    grad_out: &FeatureMap,
) -> Result<ConvGrads> {
    let zero_bias;
    let bias = if spec.bias {
        zero_bias = vec![0.0; spec.out_ch];
        Some(zero_bias.as_slice())
    } else {
        None
    };
    let g = geometry(x, spec, weight, bias)?;
    check_dim("conv2d_backward", "out_channels", spec.out_ch, grad_out.channels())?;
    check_dim("conv2d_backward", "frames", g.t_out, grad_out.frames())?;
    check_dim("conv2d_backward", "freqs", g.f_out, grad_out.freqs())?;
    let (kt, kf) = spec.kernel;
    let (nb, nt, nf) = (x.batch(), x.frames(), x.freqs());
    let mut gx = FeatureMap::zeros(nb, spec.in_ch, nt, nf);
    let mut gw = vec![0.0; weight.len()];
    let mut gb = spec.bias.then(|| vec![0.0; spec.out_ch]);
    for b in 0..nb {
        for o in 0..spec.out_ch {
            let group = o / g.cout_g;
            for t in 0..g.t_out {
                let go = grad_out.freq_row(b, o, t);
                if let Some(gb) = gb.as_mut() {
                    gb[o] += go.iter().sum::<f64>();
                }
                for ci in 0..g.cin_g {
                    let ic = group * g.cin_g + ci;
                    for dt in 0..kt {
                        let ti = t + dt;
                        if ti < spec.pad_t || ti - spec.pad_t >= nt {
                            continue;
                        }
                        let ti = ti - spec.pad_t;
                        let wbase = ((o * g.cin_g + ci) * kt + dt) * kf;
                        for df in 0..kf {
                            let w = weight[wbase + df];
                            let (lo, hi) = valid_out_range(df, spec.pad_f, spec.stride_f, nf, g.f_out);
                            let src = x.freq_row(b, ic, ti);
                            let mut acc = 0.0;
                            for fo in lo..hi {
                                acc += go[fo] * src[fo * spec.stride_f + df - spec.pad_f];
                            }
                            gw[wbase + df] += acc;
                            let dst = gx.freq_row_mut(b, ic, ti);
                            for fo in lo..hi {
                                dst[fo * spec.stride_f + df - spec.pad_f] += w * go[fo];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

fn depthwise_spec(channels: usize, kernel: (usize, usize), bias: bool) -> Result<ConvSpec> {
    if kernel.1 % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise frequency kernel {} must be odd to keep the shape",
            kernel.1
        )));
    }
    let mut spec = ConvSpec::depthwise(channels, kernel);
    spec.bias = bias;
    Ok(spec)
}

/// Depthwise convolution: causal in time, "same" in frequency; output shape
/// equals input shape. Weights are (C, 1, kt, kf) with kf odd.
pub fn dwconv_forward(
    x: &FeatureMap,
    kernel: (usize, usize),
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Result<FeatureMap> {
    let spec = depthwise_spec(x.channels(), kernel, bias.is_some())?;
    conv2d_forward(x, &spec, weight, bias)
}

pub fn dwconv_backward(
    x: &FeatureMap,
    kernel: (usize, usize),
    weight: &[f64],
    has_bias: bool,
    grad_out: &FeatureMap,
) -> Result<ConvGrads> {
    let spec = depthwise_spec(x.channels(), kernel, has_bias)?;
    conv2d_backward(x, &spec, weight, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop cross-correlation with explicit bounds checks.
    pub(crate) fn naive_conv(x: &FeatureMap, s: &ConvSpec, w: &[f64], bias: Option<&[f64]>) -> FeatureMap {
        let (kt, kf) = s.kernel;
        let t_out = x.frames() + s.pad_t + 1 - kt;
        let f_out = (x.freqs() + 2 * s.pad_f - kf) / s.stride_f + 1;
        let cin_g = s.in_ch / s.groups;
        let cout_g = s.out_ch / s.groups;
        FeatureMap::from_fn([x.batch(), s.out_ch, t_out, f_out], |b, o, t, f| {
            let mut acc = bias.map_or(0.0, |bv| bv[o]);
            for ci in 0..cin_g {
                for dt in 0..kt {
                    for df in 0..kf {
                        let ti = t as isize + dt as isize - s.pad_t as isize;
                        let fi = (f * s.stride_f + df) as isize - s.pad_f as isize;
                        if ti < 0 || fi < 0 || ti >= x.frames() as isize || fi >= x.freqs() as isize {
                            continue;
                        }
                        let ic = (o / cout_g) * cin_g + ci;
                        acc += w[((o * cin_g + ci) * kt + dt) * kf + df]
                            * x.get(b, ic, ti as usize, fi as usize);
                    }
                }
            }
            acc
        })
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_1x1() {
        let x = FeatureMap::from_fn([1, 3, 4, 5], |_, c, t, f| (c * 20 + t * 5 + f) as f64);
        let spec = ConvSpec::new(3, 3, (1, 1));
        let mut w = vec![0.0; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let y = conv2d_forward(&x, &spec, &w, Some(&[0.0; 3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_kernel_on_constant_input() {
        let x = FeatureMap::from_fn([1, 4, 5, 8], |_, _, _, _| 1.0);
        let spec = ConvSpec::new(4, 2, (2, 3));
        let w = vec![1.0; spec.weight_len()];
        let y = conv2d_forward(&x, &spec, &w, Some(&[0.5, 0.0])).unwrap();
        // interior: t ≥ 1, 1 ≤ f ≤ 6
        assert_eq!(y.get(0, 0, 3, 4), 4.0 * 6.0 + 0.5);
        assert_eq!(y.get(0, 1, 1, 1), 24.0);
        // first frame only sees the current frame
        assert_eq!(y.get(0, 1, 0, 3), 12.0);
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let cin = rng.random_range(1..4);
            let cout = rng.random_range(1..4);
            let kt = rng.random_range(1..3);
            let kf = rng.random_range(1..4);
            let sf = rng.random_range(1..4);
            let nf = rng.random_range(kf..12);
            let spec = ConvSpec::new(cin, cout, (kt, kf))
                .with_stride_f(sf)
                .with_pad_f(rng.random_range(0..=kf / 2));
            let x = FeatureMap::from_vec([2, cin, 4, nf], rand_vec(&mut rng, 2 * cin * 4 * nf)).unwrap();
            let w = rand_vec(&mut rng, spec.weight_len());
            let bias = rand_vec(&mut rng, cout);
            let y = conv2d_forward(&x, &spec, &w, Some(&bias)).unwrap();
            let r = naive_conv(&x, &spec, &w, Some(&bias));
            assert!(y.max_abs_diff(&r) < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_names_dimension() {
        let x = FeatureMap::zeros(1, 2, 3, 8);
        let spec = ConvSpec::new(3, 1, (2, 3));
        let err = conv2d_forward(&x, &spec, &vec![0.0; spec.weight_len()], Some(&[0.0])).unwrap_err();
        assert!(err.to_string().contains("in_channels"), "{err}");
    }

    #[test]
    fn stride3_unpadded_maps_3n_to_n() {
        let spec = ConvSpec::new(1, 1, (2, 3)).with_stride_f(3).with_pad_f(0);
        assert_eq!(spec.out_freqs(192), Some(64));
        assert_eq!(spec.out_freqs(48), Some(16));
    }

    #[test]
    fn dwconv_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = FeatureMap::from_vec([1, 3, 6, 7], rand_vec(&mut rng, 126)).unwrap();
        let mut w = vec![0.0; 3 * 9];
        for c in 0..3 {
            // current frame (last time tap), centre frequency tap
            w[c * 9 + 2 * 3 + 1] = 1.0;
        }
        let y = dwconv_forward(&x, (3, 3), &w, None).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn dwconv_matches_per_channel_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = 4;
        let x = FeatureMap::from_vec([1, c, 5, 9], rand_vec(&mut rng, c * 45)).unwrap();
        let w = rand_vec(&mut rng, c * 9);
        let bias = rand_vec(&mut rng, c);
        let y = dwconv_forward(&x, (3, 3), &w, Some(&bias)).unwrap();
        for ch in 0..c {
            let xc = FeatureMap::from_fn([1, 1, 5, 9], |_, _, t, f| x.get(0, ch, t, f));
            let spec = ConvSpec::new(1, 1, (3, 3));
            let yc = conv2d_forward(&xc, &spec, &w[ch * 9..ch * 9 + 9], Some(&bias[ch..ch + 1])).unwrap();
            for t in 0..5 {
                for f in 0..9 {
                    assert!((y.get(0, ch, t, f) - yc.get(0, 0, t, f)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn dwconv_all_ones_on_constant_interior() {
        let x = FeatureMap::from_fn([1, 2, 5, 6], |_, _, _, _| 0.7);
        let y = dwconv_forward(&x, (3, 3), &[1.0; 18], None).unwrap();
        assert!((y.get(0, 1, 3, 2) - 9.0 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn causal_outputs_ignore_future_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ConvSpec::new(2, 3, (2, 3));
        let w = rand_vec(&mut rng, spec.weight_len());
        let x = FeatureMap::from_vec([1, 2, 6, 8], rand_vec(&mut rng, 96)).unwrap();
        let mut x2 = x.clone();
        for c in 0..2 {
            for f in 0..8 {
                x2.set(0, c, 4, f, 9.0);
                x2.set(0, c, 5, f, -9.0);
            }
        }
        let y = conv2d_forward(&x, &spec, &w, Some(&[0.0; 3])).unwrap();
        let y2 = conv2d_forward(&x2, &spec, &w, Some(&[0.0; 3])).unwrap();
        assert_eq!(y.slice_time(0, 4), y2.slice_time(0, 4));
    }
}
