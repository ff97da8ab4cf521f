//! Central finite-difference checks of the analytic backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::nn::{layer_backward, Activation, ConvSpec, GruSpec, GruWeights, Layer, LayerNormAxes};
use crate::synth::NoisyPair;
use crate::tensor::{FeatureMap, Matrix};
use crate::training::{evaluate, loss_and_grads, TrainConfig, TrainExample, TrainMode};

pub const FD_EPS: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub kind: String,
    pub max_rel_err: f64,
    /// Number of input and parameter entries compared.
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub layers: Vec<LayerCheck>,
    /// End-to-end maximum over the parameter probes.
    pub model: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy)]
enum Case {
    Conv(ConvSpec),
    DwConv(usize, (usize, usize)),
    Shuffle(usize),
    Norm(LayerNormAxes, usize, usize),
    Prelu(usize),
    Mish,
    Sigmoid,
    Lsigmoid(usize),
    Linear(usize, usize),
    Gru(GruSpec, usize),
    BiGru(GruSpec, usize),
}

impl Case {
    fn param_sizes(&self) -> Vec<usize> {
        match *self {
            Self::Conv(s) => vec![s.weight_len(), s.out_ch],
            Self::DwConv(c, (kt, kf)) => vec![c * kt * kf, c],
            Self::Norm(axes, c, f) => vec![axes.affine_len(c, f); 2],
            Self::Prelu(c) => vec![c],
            Self::Lsigmoid(f) => vec![f],
            Self::Linear(i, o) => vec![o * i, o],
            Self::Gru(s, _) => s.shapes().iter().map(|v| v.iter().product()).collect(),
            Self::BiGru(s, _) => {
                let one: Vec<usize> = s.shapes().iter().map(|v| v.iter().product()).collect();
                one.iter().chain(&one).copied().collect()
            }
            Self::Shuffle(_) | Self::Mish | Self::Sigmoid => vec![],
        }
    }

    fn layer<'a>(&self, p: &'a [Vec<f64>]) -> Layer<'a> {
        let gw = |o: usize| GruWeights {
            w_ih: &p[o],
            w_hh: &p[o + 1],
            b_ih: &p[o + 2],
            b_hh: &p[o + 3],
        };
        match *self {
            Self::Conv(spec) => Layer::Conv2d {
                spec,
                weight: &p[0],
                bias: Some(&p[1]),
            },
            Self::DwConv(_, kernel) => Layer::DwConv {
                kernel,
                weight: &p[0],
                bias: Some(&p[1]),
            },
            Self::Shuffle(factor) => Layer::Shuffle { factor },
            Self::Norm(axes, ..) => Layer::LayerNorm {
                axes,
                gamma: &p[0],
                beta: &p[1],
            },
            Self::Prelu(_) => Layer::Prelu { slope: &p[0] },
            Self::Mish => Layer::Mish,
            Self::Sigmoid => Layer::Sigmoid,
            Self::Lsigmoid(_) => Layer::Lsigmoid {
                alpha: &p[0],
                beta: 2.0,
            },
            Self::Linear(_, o) => Layer::Linear {
                weight: &p[0],
                bias: Some(&p[1]),
                out_dim: o,
            },
            Self::Gru(spec, seq_len) => Layer::Gru {
                spec,
                weights: gw(0),
                seq_len,
                h0: None,
            },
            Self::BiGru(spec, seq_len) => Layer::BiGru {
                spec,
                fwd: gw(0),
                bwd: gw(4),
                seq_len,
            },
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Input values kept away from zero so that piecewise-linear layers are
/// differentiable at every probe.
fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn cases() -> Vec<(Case, Activation)> {
    let map = |c, t, f| Activation::Map(FeatureMap::zeros(1, c, t, f));
    let rows = |r, c| Activation::Rows(Matrix::zeros(r, c));
    vec![
        (Case::Conv(ConvSpec::new(2, 3, (2, 3))), map(2, 4, 6)),
        (Case::Conv(ConvSpec::new(2, 2, (1, 3)).with_stride_f(3).with_pad_f(0)), map(2, 3, 9)),
        (Case::DwConv(3, (3, 3)), map(3, 4, 5)),
        (Case::Shuffle(3), map(6, 2, 4)),
        (Case::Norm(LayerNormAxes::ChannelFreq, 3, 5), map(3, 3, 5)),
        (Case::Norm(LayerNormAxes::Channel, 4, 3), map(4, 3, 3)),
        (Case::Prelu(3), map(3, 2, 4)),
        (Case::Mish, map(2, 3, 4)),
        (Case::Sigmoid, map(2, 3, 4)),
        (Case::Lsigmoid(5), map(1, 3, 5)),
        (Case::Linear(4, 3), rows(5, 4)),
        (Case::Gru(GruSpec::new(3, 4), 5), rows(10, 3)),
        (Case::BiGru(GruSpec::new(3, 2), 4), rows(8, 3)),
    ]
}

fn kind_name(layer: &Layer) -> String {
    format!("{:?}", layer.kind())
}

fn projected(layer: &Layer, x: &Activation, r: &[f64]) -> Result<f64> {
    let (y, _) = layer.forward(x, false)?;
    Ok(y.data().iter().zip(r).map(|(a, b)| a * b).sum())
}

fn check_case(case: Case, mut x: Activation, rng: &mut ChaCha8Rng) -> Result<(String, f64, usize)> {
    let mut params: Vec<Vec<f64>> = case.param_sizes().into_iter().map(|n| random_vec(rng, n, 0.5)).collect();
    if let Case::Norm(..) = case {
        params[0].iter_mut().for_each(|g| *g += 1.0);
    }
    let n_in = x.data().len();
    x.data_mut().copy_from_slice(&random_input(rng, n_in));

    let layer = case.layer(&params);
    let name = kind_name(&layer);
    let (y, cache) = layer.forward(&x, true)?;
    let r = random_vec(rng, y.data().len(), 1.0);
    let mut g_out = y;
    g_out.data_mut().copy_from_slice(&r);
    let g = layer_backward(&layer, cache.as_ref(), &g_out)?;

    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..n_in {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += FD_EPS;
        xm.data_mut()[i] -= FD_EPS;
        let fd = (projected(&layer, &xp, &r)? - projected(&layer, &xm, &r)?) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(g.input.data()[i], fd));
        count += 1;
    }
    for (k, gp) in g.params.iter().enumerate() {
        for i in 0..params[k].len() {
            let mut p = params.clone();
            p[k][i] += FD_EPS;
            let lp = projected(&case.layer(&p), &x, &r)?;
            p[k][i] -= 2.0 * FD_EPS;
            let lm = projected(&case.layer(&p), &x, &r)?;
            worst = worst.max(rel_err(gp[i], (lp - lm) / (2.0 * FD_EPS)));
            count += 1;
        }
    }
    Ok((name, worst, count))
}

/// Checks every layer kind on small random instances, comparing all input
/// and parameter gradients. Results are grouped by kind.
pub fn gradcheck_layers(seed: u64) -> Result<Vec<LayerCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LayerCheck> = Vec::new();
    for (case, x) in cases() {
        let (kind, err, n) = check_case(case, x, &mut rng)?;
        match out.iter_mut().find(|c| c.kind == kind) {
            Some(c) => {
                c.max_rel_err = c.max_rel_err.max(err);
                c.entries += n;
            }
            None => out.push(LayerCheck {
                kind,
                max_rel_err: err,
                entries: n,
            }),
        }
    }
    Ok(out)
}

/// End-to-end check on the tiny configuration with an 8-frame pair and all
/// loss terms active: `probes` random parameter entries are perturbed and
/// the worst relative error is returned.
pub fn gradcheck_model(seed: u64, probes: usize) -> Result<f64> {
    let mut model = Model::new(ModelConfig::tiny(), seed)?;
    let sr = model.config().stft.sample_rate;
    let hop = model.config().stft.hop;
    let len = 7 * hop;
    let pair = NoisyPair::tone_in_noise(len as f64 / sr as f64, sr, 0.0, 1.0, seed ^ 0x5eed);
    let ex = TrainExample::new(&model, &pair.noisy, &pair.clean)?;
    let cfg = TrainConfig {
        mode: TrainMode::Joint,
        ..Default::default()
    };
    let analytic = loss_and_grads(&model, &ex, &cfg)?.grads;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let sizes: Vec<usize> = model.weights().tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut id = 0;
        while flat >= sizes[id] {
            flat -= sizes[id];
            id += 1;
        }
        let w0 = model.weights().data(id)[flat];
        model.weights_mut().data_mut(id)[flat] = w0 + FD_EPS;
        let lp = evaluate(&model, &ex, &cfg)?.1;
        model.weights_mut().data_mut(id)[flat] = w0 - FD_EPS;
        let lm = evaluate(&model, &ex, &cfg)?.1;
        model.weights_mut().data_mut(id)[flat] = w0;
        worst = worst.max(rel_err(analytic.get(id)[flat], (lp - lm) / (2.0 * FD_EPS)));
    }
    Ok(worst)
}

/// Layer-level and end-to-end checks together.
pub fn gradcheck_all(seed: u64, probes: usize) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        layers: gradcheck_layers(seed)?,
        model: gradcheck_model(seed, probes)?,
        probes,
    })
}
