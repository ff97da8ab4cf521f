//! Tensor inventory of a configuration and the typed handles the forward
//! and backward passes use to reach each tensor.

use crate::model::config::{ModelConfig, INPUT_CHANNELS};
use crate::model::weights::WeightStore;
use crate::nn::init::{fan_in_bound, LSIGMOID_ALPHA_INIT, PRELU_INIT};
use crate::nn::{ConvSpec, GruSpec, GruWeights, Layer, LayerNormAxes};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Uniform(f64),
    Const(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Planned {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvP {
    pub spec: ConvSpec,
    pub w: usize,
    pub b: usize,
}

impl ConvP {
    pub fn layer<'a>(&self, ws: &'a WeightStore) -> Layer<'a> {
        Layer::Conv2d {
            spec: self.spec,
            weight: ws.data(self.w),
            bias: Some(ws.data(self.b)),
        }
    }

    pub fn ids(&self) -> [usize; 2] {
        [self.w, self.b]
    }

    /// Frames of history the conv needs in front of new input.
    pub fn history(&self) -> usize {
        self.spec.kernel.0 - 1
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormP {
    pub axes: LayerNormAxes,
    pub gamma: usize,
    pub beta: usize,
}

impl NormP {
    pub fn layer<'a>(&self, ws: &'a WeightStore) -> Layer<'a> {
        Layer::LayerNorm {
            axes: self.axes,
            gamma: ws.data(self.gamma),
            beta: ws.data(self.beta),
        }
    }

    pub fn ids(&self) -> [usize; 2] {
        [self.gamma, self.beta]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearP {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearP {
    pub fn layer<'a>(&self, ws: &'a WeightStore) -> Layer<'a> {
        Layer::Linear {
            weight: ws.data(self.w),
            bias: Some(ws.data(self.b)),
            out_dim: self.out_dim,
        }
    }

    pub fn ids(&self) -> [usize; 2] {
        [self.w, self.b]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GruP {
    pub spec: GruSpec,
    pub ids: [usize; 4],
}

impl GruP {
    pub fn weights<'a>(&self, ws: &'a WeightStore) -> GruWeights<'a> {
        GruWeights {
            w_ih: ws.data(self.ids[0]),
            w_hh: ws.data(self.ids[1]),
            b_ih: ws.data(self.ids[2]),
            b_hh: ws.data(self.ids[3]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum EncConv {
    Plain(ConvP),
    SubBand { low: ConvP, high: ConvP },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncBlock {
    pub conv: EncConv,
    pub norm: NormP,
    pub act: usize,
    pub in_ch: usize,
    pub in_freqs: usize,
    pub out_ch: usize,
    pub out_freqs: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecBlock {
    pub low: ConvP,
    pub high: ConvP,
    pub norm: NormP,
    pub act: usize,
    pub in_ch: usize,
    pub in_freqs: usize,
    pub out_ch: usize,
    pub out_freqs: usize,
    /// Encoder block whose output is added before the activation.
    pub skip: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DprP {
    pub fwd: GruP,
    pub bwd: GruP,
    pub f_lin: LinearP,
    pub f_norm: NormP,
    pub t_gru: GruP,
    pub t_lin: LinearP,
    pub t_norm: NormP,
    pub glu_in: LinearP,
    pub dw: ConvP,
    pub glu_out: LinearP,
    pub glu_norm: NormP,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NdBlock {
    pub conv: ConvP,
    pub norm: NormP,
    pub act: usize,
    pub in_freqs: usize,
    pub out_freqs: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub enc: Vec<EncBlock>,
    pub dpr: Vec<DprP>,
    pub dec: Vec<DecBlock>,
    pub out_conv: ConvP,
    pub alpha: usize,
    pub nd: Vec<NdBlock>,
    pub nd_head: LinearP,
    pub channels: usize,
    pub freqs: usize,
}

pub(crate) const GLU_KERNEL: (usize, usize) = (3, 3);

#[derive(Default)]
struct Planner {
    items: Vec<Planned>,
}

impl Planner {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.items.push(Planned { name, shape, init });
        self.items.len() - 1
    }

    fn conv(&mut self, prefix: &str, spec: ConvSpec) -> ConvP {
        let (kt, kf) = spec.kernel;
        let bound = fan_in_bound(spec.in_ch / spec.groups * kt * kf);
        let w = self.add(format!("{prefix}.weight"), spec.weight_shape(), Init::Uniform(bound));
        let b = self.add(format!("{prefix}.bias"), vec![spec.out_ch], Init::Uniform(bound));
        ConvP { spec, w, b }
    }

    fn norm(&mut self, prefix: &str, axes: LayerNormAxes, c: usize, f: usize) -> NormP {
        let shape = axes.affine_shape(c, f);
        let gamma = self.add(format!("{prefix}.gamma"), shape.clone(), Init::Const(1.0));
        let beta = self.add(format!("{prefix}.beta"), shape, Init::Const(0.0));
        NormP { axes, gamma, beta }
    }

    fn prelu(&mut self, prefix: &str, c: usize) -> usize {
        self.add(format!("{prefix}.slope"), vec![c], Init::Const(PRELU_INIT))
    }

    fn linear(&mut self, prefix: &str, in_dim: usize, out_dim: usize) -> LinearP {
        let bound = fan_in_bound(in_dim);
        let w = self.add(format!("{prefix}.weight"), vec![out_dim, in_dim], Init::Uniform(bound));
        let b = self.add(format!("{prefix}.bias"), vec![out_dim], Init::Uniform(bound));
        LinearP { w, b, in_dim, out_dim }
    }

    fn gru(&mut self, prefix: &str, spec: GruSpec) -> GruP {
        let bound = fan_in_bound(spec.hidden);
        let names = ["w_ih", "w_hh", "b_ih", "b_hh"];
        let shapes = spec.shapes();
        let mut ids = [0; 4];
        for (k, (n, s)) in names.iter().zip(shapes).enumerate() {
            ids[k] = self.add(format!("{prefix}.{n}"), s, Init::Uniform(bound));
        }
        GruP { spec, ids }
    }
}

/// Enumerates every tensor of `cfg` in storage order. `cfg` must be valid.
pub(crate) fn plan(cfg: &ModelConfig) -> (Layout, Vec<Planned>) {
    let mut p = Planner::default();
    let k = cfg.kernel;
    let same = |i, o| ConvSpec::new(i, o, k).with_pad_t(0);
    let freqs = cfg.encoder_freqs();
    let l = cfg.enc_channels.len();

    let mut enc = Vec::with_capacity(l);
    let mut in_ch = INPUT_CHANNELS;
    for i in 0..l {
        let out_ch = cfg.enc_channels[i];
        let prefix = format!("enc.{i}");
        let (conv, in_f, out_f) = if i == 0 {
            (EncConv::Plain(p.conv(&format!("{prefix}.conv"), same(in_ch, out_ch))), freqs[0], freqs[0])
        } else {
            let low = p.conv(&format!("{prefix}.low"), same(in_ch, out_ch));
            let high = p.conv(
                &format!("{prefix}.high"),
                same(in_ch, out_ch).with_stride_f(3).with_pad_f(0),
            );
            (EncConv::SubBand { low, high }, freqs[i - 1], freqs[i])
        };
        let norm = p.norm(&format!("{prefix}.norm"), LayerNormAxes::ChannelFreq, out_ch, out_f);
        let act = p.prelu(&format!("{prefix}.act"), out_ch);
        enc.push(EncBlock {
            conv,
            norm,
            act,
            in_ch,
            in_freqs: in_f,
            out_ch,
            out_freqs: out_f,
        });
        in_ch = out_ch;
    }

    let (c, f) = cfg.bottleneck();
    let mut dpr = Vec::with_capacity(cfg.dpr_repeats);
    for n in 0..cfg.dpr_repeats {
        let prefix = format!("dpr.{n}");
        let bspec = GruSpec::new(c, cfg.bigru_hidden);
        let fwd = p.gru(&format!("{prefix}.freq.fwd"), bspec);
        let bwd = p.gru(&format!("{prefix}.freq.bwd"), bspec);
        let f_lin = p.linear(&format!("{prefix}.freq.proj"), 2 * cfg.bigru_hidden, c);
        let f_norm = p.norm(&format!("{prefix}.freq.norm"), LayerNormAxes::Channel, c, f);
        let t_gru = p.gru(&format!("{prefix}.time.gru"), GruSpec::new(c, cfg.gru_hidden));
        let t_lin = p.linear(&format!("{prefix}.time.proj"), cfg.gru_hidden, c);
        let t_norm = p.norm(&format!("{prefix}.time.norm"), LayerNormAxes::Channel, c, f);
        let glu_in = p.linear(&format!("{prefix}.glu.in"), c, 2 * c);
        let dw = p.conv(
            &format!("{prefix}.glu.dw"),
            ConvSpec::depthwise(c, GLU_KERNEL).with_pad_t(0),
        );
        let glu_out = p.linear(&format!("{prefix}.glu.out"), c, c);
        let glu_norm = p.norm(&format!("{prefix}.glu.norm"), LayerNormAxes::Channel, c, f);
        dpr.push(DprP {
            fwd,
            bwd,
            f_lin,
            f_norm,
            t_gru,
            t_lin,
            t_norm,
            glu_in,
            dw,
            glu_out,
            glu_norm,
        });
    }

    let mut dec = Vec::with_capacity(l.saturating_sub(1));
    let mut in_ch = c;
    let mut in_f = f;
    for j in 0..l - 1 {
        let out_ch = cfg.dec_channels[j];
        let prefix = format!("dec.{j}");
        let low = p.conv(&format!("{prefix}.low"), same(in_ch, out_ch));
        let high = p.conv(&format!("{prefix}.high"), same(in_ch, 3 * out_ch));
        let out_f = 2 * in_f;
        let norm = p.norm(&format!("{prefix}.norm"), LayerNormAxes::ChannelFreq, out_ch, out_f);
        let act = p.prelu(&format!("{prefix}.act"), out_ch);
        dec.push(DecBlock {
            low,
            high,
            norm,
            act,
            in_ch,
            in_freqs: in_f,
            out_ch,
            out_freqs: out_f,
            skip: l - 2 - j,
        });
        in_ch = out_ch;
        in_f = out_f;
    }
    let out_conv = p.conv("out.conv", same(in_ch, 1));
    let alpha = p.add(
        "mask.alpha".into(),
        vec![cfg.working_bins],
        Init::Const(LSIGMOID_ALPHA_INIT),
    );

    let mut nd = Vec::with_capacity(cfg.nd_channels.len());
    let mut in_ch = 1;
    let mut in_f = cfg.mel.n_mels;
    for (i, &out_ch) in cfg.nd_channels.iter().enumerate() {
        let prefix = format!("nd.{i}");
        let conv = p.conv(&format!("{prefix}.conv"), same(in_ch, out_ch).with_stride_f(2));
        let out_f = in_f / 2;
        let norm = p.norm(&format!("{prefix}.norm"), LayerNormAxes::ChannelFreq, out_ch, out_f);
        let act = p.prelu(&format!("{prefix}.act"), out_ch);
        nd.push(NdBlock {
            conv,
            norm,
            act,
            in_freqs: in_f,
            out_freqs: out_f,
        });
        in_ch = out_ch;
        in_f = out_f;
    }
    let nd_head = p.linear("nd.head", in_ch * in_f, 1);

    (
        Layout {
            enc,
            dpr,
            dec,
            out_conv,
            alpha,
            nd,
            nd_head,
            channels: c,
            freqs: f,
        },
        p.items,
    )
}
