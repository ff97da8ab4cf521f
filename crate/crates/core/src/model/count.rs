use serde::{Deserialize, Serialize};

use crate::model::layout::{EncConv, Layout, GLU_KERNEL};
use crate::model::Model;

/// Parameter totals by module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub encoder: usize,
    pub dpr: usize,
    pub decoder: usize,
    pub mask: usize,
    pub detector: usize,
    /// Everything but the detector.
    pub enhancer: usize,
    pub total: usize,
}

/// Multiply-accumulate counts of the weight layers. Normalization,
/// activations, the FFT and the mel projection are not counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacCount {
    pub enhancer_per_frame: usize,
    pub detector_per_frame: usize,
    pub frames_per_second: f64,
    pub seconds: f64,
    pub enhancer: f64,
    pub detector: f64,
}

impl MacCount {
    pub fn total(&self) -> f64 {
        self.enhancer + self.detector
    }
}

pub fn count_params(model: &Model) -> ParamCount {
    let mut c = ParamCount {
        encoder: 0,
        dpr: 0,
        decoder: 0,
        mask: 0,
        detector: 0,
        enhancer: 0,
        total: 0,
    };
    for t in model.weights().tensors() {
        let n = t.len();
        let module = t.name.split('.').next().unwrap_or("");
        match module {
            "enc" => c.encoder += n,
            "dpr" => c.dpr += n,
            "dec" | "out" => c.decoder += n,
            "mask" => c.mask += n,
            "nd" => c.detector += n,
            _ => {}
        }
        c.total += n;
    }
    c.enhancer = c.total - c.detector;
    c
}

pub(crate) fn enhancer_macs_per_frame(l: &Layout) -> usize {
    let mut m = 0;
    for b in &l.enc {
        m += match b.conv {
            EncConv::Plain(c) => c.spec.macs_per_frame(b.in_freqs),
            EncConv::SubBand { low, high } => {
                let q = b.in_freqs / 4;
                low.spec.macs_per_frame(q) + high.spec.macs_per_frame(b.in_freqs - q)
            }
        };
    }
    let (c, f) = (l.channels, l.freqs);
    for p in &l.dpr {
        let hb = p.fwd.spec.hidden;
        let ht = p.t_gru.spec.hidden;
        m += f * (2 * p.fwd.spec.macs_per_step() + 2 * hb * c);
        m += f * (p.t_gru.spec.macs_per_step() + ht * c);
        m += f * (c * 2 * c + c * c);
        m += c * f * GLU_KERNEL.0 * GLU_KERNEL.1;
    }
    for b in &l.dec {
        let half = b.in_freqs / 2;
        m += b.low.spec.macs_per_frame(half) + b.high.spec.macs_per_frame(half);
    }
    let last_f = l.dec.last().map_or(l.enc[0].out_freqs, |b| b.out_freqs);
    m + l.out_conv.spec.macs_per_frame(last_f)
}

pub(crate) fn detector_macs_per_frame(l: &Layout) -> usize {
    let convs: usize = l.nd.iter().map(|b| b.conv.spec.macs_per_frame(b.in_freqs)).sum();
    convs + l.nd_head.in_dim * l.nd_head.out_dim
}

/// MACs for `seconds` of audio at the configured frame rate.
pub fn count_macs(model: &Model, seconds: f64) -> MacCount {
    let fps = model.config().stft.frames_per_second();
    let se = enhancer_macs_per_frame(&model.layout);
    let nd = detector_macs_per_frame(&model.layout);
    MacCount {
        enhancer_per_frame: se,
        detector_per_frame: nd,
        frames_per_second: fps,
        seconds,
        enhancer: se as f64 * fps * seconds,
        detector: nd as f64 * fps * seconds,
    }
}
