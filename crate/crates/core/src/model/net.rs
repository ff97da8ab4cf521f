//! Forward and backward passes of the enhancer and the detector.
//!
//! Every causal conv runs with zero time padding on its input prefixed by
//! the last `kt - 1` frames held in a state object. A fresh state holds
//! zeros, which is exactly causal zero padding, so offline inference,
//! training and frame-by-frame streaming all share this one code path.

use crate::error::{check_dim, Result};
use crate::model::layout::{ConvP, DecBlock, DprP, EncBlock, EncConv, Layout, GLU_KERNEL};
use crate::model::weights::{Grads, WeightStore};
use crate::nn::{layer_backward, Activation, Layer, LayerCache};
use crate::tensor::{FeatureMap, Matrix};

/// Forward record consumed in reverse order by the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    caches: Vec<LayerCache>,
    saved: Vec<Matrix>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty() && self.saved.is_empty()
    }
}

pub(crate) struct Rec<'t>(pub Option<&'t mut Tape>);

impl Rec<'_> {
    fn run(&mut self, layer: Layer, x: Activation) -> Result<Activation> {
        let (y, cache) = layer.forward(&x, self.0.is_some())?;
        if let (Some(tape), Some(cache)) = (self.0.as_deref_mut(), cache) {
            tape.caches.push(cache);
        }
        Ok(y)
    }

    fn map(&mut self, layer: Layer, x: FeatureMap) -> Result<FeatureMap> {
        self.run(layer, Activation::Map(x))?.into_map()
    }

    fn rows(&mut self, layer: Layer, x: Matrix) -> Result<Matrix> {
        self.run(layer, Activation::Rows(x))?.into_rows()
    }

    fn save(&mut self, m: &Matrix) {
        if let Some(tape) = self.0.as_deref_mut() {
            tape.saved.push(m.clone());
        }
    }
}

pub(crate) struct Back<'a> {
    tape: Tape,
    grads: &'a mut Grads,
}

impl<'a> Back<'a> {
    pub fn new(tape: Tape, grads: &'a mut Grads) -> Self {
        Self { tape, grads }
    }

    fn run(&mut self, layer: Layer, ids: &[usize], g: Activation) -> Result<Activation> {
        let cache = self.tape.caches.pop();
        let lg = layer_backward(&layer, cache.as_ref(), &g)?;
        for (&id, p) in ids.iter().zip(&lg.params) {
            self.grads.add(id, p);
        }
        Ok(lg.input)
    }

    fn map(&mut self, layer: Layer, ids: &[usize], g: FeatureMap) -> Result<FeatureMap> {
        self.run(layer, ids, Activation::Map(g))?.into_map()
    }

    fn rows(&mut self, layer: Layer, ids: &[usize], g: Matrix) -> Result<Matrix> {
        self.run(layer, ids, Activation::Rows(g))?.into_rows()
    }

    fn saved(&mut self) -> Result<Matrix> {
        self.tape
            .saved
            .pop()
            .ok_or(crate::Error::MissingCache("saved activation"))
    }
}

/// Recurrent and convolutional history of the enhancer for batch size 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    enc: Vec<FeatureMap>,
    dpr: Vec<DprState>,
    dec: Vec<FeatureMap>,
    out: FeatureMap,
}

#[derive(Debug, Clone, PartialEq)]
struct DprState {
    dw: FeatureMap,
    h: Matrix,
}

/// History of the detector's conv stack.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    hist: Vec<FeatureMap>,
}

fn history(c: &ConvP, ch: usize, freqs: usize) -> FeatureMap {
    FeatureMap::zeros(1, ch, c.history(), freqs)
}

impl NetState {
    pub(crate) fn fresh(layout: &Layout, gru_hidden: usize) -> Self {
        let enc = layout
            .enc
            .iter()
            .map(|b| {
                let c = match b.conv {
                    EncConv::Plain(c) => c,
                    EncConv::SubBand { low, .. } => low,
                };
                history(&c, b.in_ch, b.in_freqs)
            })
            .collect();
        let dpr = layout
            .dpr
            .iter()
            .map(|_| DprState {
                dw: FeatureMap::zeros(1, layout.channels, GLU_KERNEL.0 - 1, layout.freqs),
                h: Matrix::zeros(layout.freqs, gru_hidden),
            })
            .collect();
        let dec = layout
            .dec
            .iter()
            .map(|b| history(&b.low, b.in_ch, b.in_freqs))
            .collect();
        let (ch, f) = layout
            .dec
            .last()
            .map_or((layout.enc[0].out_ch, layout.enc[0].out_freqs), |b| (b.out_ch, b.out_freqs));
        Self {
            enc,
            dpr,
            dec,
            out: history(&layout.out_conv, ch, f),
        }
    }

    /// True when every carried buffer and hidden state is zero.
    pub fn is_zero(&self) -> bool {
        let zero = |m: &FeatureMap| m.data().iter().all(|v| *v == 0.0);
        self.enc.iter().all(zero)
            && self.dec.iter().all(zero)
            && zero(&self.out)
            && self.dpr.iter().all(|d| zero(&d.dw) && d.h.data().iter().all(|v| *v == 0.0))
    }
}

impl DetectorState {
    pub(crate) fn fresh(layout: &Layout) -> Self {
        let mut ch = 1;
        let hist = layout
            .nd
            .iter()
            .map(|b| {
                let h = history(&b.conv, ch, b.in_freqs);
                ch = b.conv.spec.out_ch;
                h
            })
            .collect();
        Self { hist }
    }

    pub fn is_zero(&self) -> bool {
        self.hist.iter().all(|m| m.data().iter().all(|v| *v == 0.0))
    }
}

/// Prefix `x` with the stored history and keep the newest frames as the
/// next history.
fn with_history(x: &FeatureMap, hist: &mut FeatureMap) -> Result<FeatureMap> {
    let cat = FeatureMap::concat_time(hist, x)?;
    let (n, t) = (hist.frames(), cat.frames());
    *hist = cat.slice_time(t - n, t);
    Ok(cat)
}

fn drop_history(g: &FeatureMap, n: usize) -> FeatureMap {
    g.slice_time(n, g.frames())
}

fn add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// Rows ordered by (b, f, t): one time sequence per band.
fn to_time_rows(x: &FeatureMap) -> Matrix {
    let [nb, nc, nt, nf] = x.dims();
    let mut m = Matrix::zeros(nb * nf * nt, nc);
    for b in 0..nb {
        for c in 0..nc {
            for t in 0..nt {
                for (f, &v) in x.freq_row(b, c, t).iter().enumerate() {
                    m.set((b * nf + f) * nt + t, c, v);
                }
            }
        }
    }
    m
}

fn from_time_rows(m: &Matrix, nb: usize, nt: usize, nf: usize) -> FeatureMap {
    FeatureMap::from_fn([nb, m.cols(), nt, nf], |b, c, t, f| m.get((b * nf + f) * nt + t, c))
}

fn split_cols(m: &Matrix, at: usize) -> (Matrix, Matrix) {
    let a = Matrix::from_fn(m.rows(), at, |r, c| m.get(r, c));
    let b = Matrix::from_fn(m.rows(), m.cols() - at, |r, c| m.get(r, at + c));
    (a, b)
}

fn join_cols(a: &Matrix, b: &Matrix) -> Matrix {
    let at = a.cols();
    Matrix::from_fn(a.rows(), at + b.cols(), |r, c| if c < at { a.get(r, c) } else { b.get(r, c - at) })
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) * b.get(r, c))
}

/// One detector frame flattened to a `C·F` vector per row.
fn flatten_frames(x: &FeatureMap) -> Matrix {
    let [nb, nc, nt, nf] = x.dims();
    Matrix::from_fn(nb * nt, nc * nf, |r, k| x.get(r / nt, k / nf, r % nt, k % nf))
}

fn unflatten_frames(m: &Matrix, dims: [usize; 4]) -> FeatureMap {
    let [_, _, nt, nf] = dims;
    FeatureMap::from_fn(dims, |b, c, t, f| m.get(b * nt + t, c * nf + f))
}

fn expect_shape(x: &FeatureMap, context: &'static str, ch: usize, freqs: usize) -> Result<()> {
    check_dim(context, "channels", ch, x.channels())?;
    check_dim(context, "freqs", freqs, x.freqs())
}

pub(crate) struct Net<'a> {
    pub ws: &'a WeightStore,
    pub layout: &'a Layout,
    pub beta: f64,
}

impl Net<'_> {
    fn encoder(&self, i: usize, b: &EncBlock, x: &FeatureMap, st: &mut NetState, rec: &mut Rec) -> Result<FeatureMap> {
        expect_shape(x, "encoder block input", b.in_ch, b.in_freqs)?;
        let cat = with_history(x, &mut st.enc[i])?;
        let y = match b.conv {
            EncConv::Plain(c) => rec.map(c.layer(self.ws), cat)?,
            EncConv::SubBand { low, high } => {
                let q = b.in_freqs / 4;
                let lo = rec.map(low.layer(self.ws), cat.slice_freq(0, q))?;
                let hi = rec.map(high.layer(self.ws), cat.slice_freq(q, b.in_freqs))?;
                FeatureMap::concat_freq(&lo, &hi)?
            }
        };
        let y = rec.map(b.norm.layer(self.ws), y)?;
        let y = rec.map(Layer::Prelu { slope: self.ws.data(b.act) }, y)?;
        expect_shape(&y, "encoder block output", b.out_ch, b.out_freqs)?;
        Ok(y)
    }

    fn encoder_back(&self, b: &EncBlock, g: FeatureMap, back: &mut Back) -> Result<FeatureMap> {
        let g = back.map(Layer::Prelu { slope: self.ws.data(b.act) }, &[b.act], g)?;
        let g = back.map(b.norm.layer(self.ws), &b.norm.ids(), g)?;
        let (gcat, hist) = match b.conv {
            EncConv::Plain(c) => (back.map(c.layer(self.ws), &c.ids(), g)?, c.history()),
            EncConv::SubBand { low, high } => {
                let half = b.out_freqs / 2;
                let g_hi = back.map(high.layer(self.ws), &high.ids(), g.slice_freq(half, b.out_freqs))?;
                let g_lo = back.map(low.layer(self.ws), &low.ids(), g.slice_freq(0, half))?;
                (FeatureMap::concat_freq(&g_lo, &g_hi)?, low.history())
            }
        };
        Ok(drop_history(&gcat, hist))
    }

    fn decoder(
        &self,
        j: usize,
        b: &DecBlock,
        x: &FeatureMap,
        skip: &FeatureMap,
        st: &mut NetState,
        rec: &mut Rec,
    ) -> Result<FeatureMap> {
        expect_shape(x, "decoder block input", b.in_ch, b.in_freqs)?;
        let cat = with_history(x, &mut st.dec[j])?;
        let half = b.in_freqs / 2;
        let lo = rec.map(b.low.layer(self.ws), cat.slice_freq(0, half))?;
        let hi = rec.map(b.high.layer(self.ws), cat.slice_freq(half, b.in_freqs))?;
        let hi = rec.map(Layer::Shuffle { factor: 3 }, hi)?;
        let y = FeatureMap::concat_freq(&lo, &hi)?;
        let y = rec.map(b.norm.layer(self.ws), y)?;
        let y = add(&y, skip)?;
        let y = rec.map(Layer::Prelu { slope: self.ws.data(b.act) }, y)?;
        expect_shape(&y, "decoder block output", b.out_ch, b.out_freqs)?;
        Ok(y)
    }

    /// Returns (input gradient, skip gradient).
    fn decoder_back(&self, b: &DecBlock, g: FeatureMap, back: &mut Back) -> Result<(FeatureMap, FeatureMap)> {
        let g = back.map(Layer::Prelu { slope: self.ws.data(b.act) }, &[b.act], g)?;
        let g_skip = g.clone();
        let g = back.map(b.norm.layer(self.ws), &b.norm.ids(), g)?;
        let half = b.in_freqs / 2;
        let g_hi = back.map(Layer::Shuffle { factor: 3 }, &[], g.slice_freq(half, b.out_freqs))?;
        let g_hi = back.map(b.high.layer(self.ws), &b.high.ids(), g_hi)?;
        let g_lo = back.map(b.low.layer(self.ws), &b.low.ids(), g.slice_freq(0, half))?;
        let gcat = FeatureMap::concat_freq(&g_lo, &g_hi)?;
        Ok((drop_history(&gcat, b.low.history()), g_skip))
    }

    fn dpr(&self, p: &DprP, x: &FeatureMap, st: &mut DprState, rec: &mut Rec) -> Result<FeatureMap> {
        let [nb, _, nt, nf] = x.dims();
        let ws = self.ws;
        // frequency path: one Bi-GRU sequence per frame
        let y = rec.rows(
            Layer::BiGru {
                spec: p.fwd.spec,
                fwd: p.fwd.weights(ws),
                bwd: p.bwd.weights(ws),
                seq_len: nf,
            },
            x.to_rows(),
        )?;
        let y = rec.rows(p.f_lin.layer(ws), y)?;
        let y = rec.map(p.f_norm.layer(ws), FeatureMap::from_rows(&y, nb, nt, nf)?)?;
        let x1 = add(x, &y)?;

        // time path: one GRU sequence per band, continuing from the stored state
        let h0 = st.h.clone();
        let y = rec.rows(
            Layer::Gru {
                spec: p.t_gru.spec,
                weights: p.t_gru.weights(ws),
                seq_len: nt,
                h0: Some(&h0),
            },
            to_time_rows(&x1),
        )?;
        for f in 0..nf {
            st.h.row_mut(f).copy_from_slice(y.row(f * nt + nt - 1));
        }
        let y = rec.rows(p.t_lin.layer(ws), y)?;
        let y = rec.map(p.t_norm.layer(ws), from_time_rows(&y, nb, nt, nf))?;
        let x2 = add(&x1, &y)?;

        // gated channel mixer
        let c = x.channels();
        let vg = rec.rows(p.glu_in.layer(ws), x2.to_rows())?;
        let (v, g) = split_cols(&vg, c);
        let gmap = FeatureMap::from_rows(&g, nb, nt, nf)?;
        let cat = with_history(&gmap, &mut st.dw)?;
        let gc = rec.map(p.dw.layer(ws), cat)?;
        let gm = rec.map(Layer::Mish, gc)?.to_rows();
        rec.save(&v);
        rec.save(&gm);
        let y = rec.rows(p.glu_out.layer(ws), hadamard(&v, &gm))?;
        let y = rec.map(p.glu_norm.layer(ws), FeatureMap::from_rows(&y, nb, nt, nf)?)?;
        add(&x2, &y)
    }

    fn dpr_back(&self, p: &DprP, g3: FeatureMap, back: &mut Back) -> Result<FeatureMap> {
        let [nb, _, nt, nf] = g3.dims();
        let ws = self.ws;
        let gb = back.map(p.glu_norm.layer(ws), &p.glu_norm.ids(), g3.clone())?;
        let gp = back.rows(p.glu_out.layer(ws), &p.glu_out.ids(), gb.to_rows())?;
        let gm = back.saved()?;
        let v = back.saved()?;
        let g_v = hadamard(&gp, &gm);
        let g_gm = FeatureMap::from_rows(&hadamard(&gp, &v), nb, nt, nf)?;
        let g_gc = back.map(Layer::Mish, &[], g_gm)?;
        let g_cat = back.map(p.dw.layer(ws), &p.dw.ids(), g_gc)?;
        let g_g = drop_history(&g_cat, GLU_KERNEL.0 - 1).to_rows();
        let g_rows = back.rows(p.glu_in.layer(ws), &p.glu_in.ids(), join_cols(&g_v, &g_g))?;
        let g2 = add(&g3, &FeatureMap::from_rows(&g_rows, nb, nt, nf)?)?;

        let gb = back.map(p.t_norm.layer(ws), &p.t_norm.ids(), g2.clone())?;
        let gr = back.rows(p.t_lin.layer(ws), &p.t_lin.ids(), to_time_rows(&gb))?;
        let gru = Layer::Gru {
            spec: p.t_gru.spec,
            weights: p.t_gru.weights(ws),
            seq_len: nt,
            h0: None,
        };
        let gr = back.rows(gru, &p.t_gru.ids, gr)?;
        let g1 = add(&g2, &from_time_rows(&gr, nb, nt, nf))?;

        let gb = back.map(p.f_norm.layer(ws), &p.f_norm.ids(), g1.clone())?;
        let gr = back.rows(p.f_lin.layer(ws), &p.f_lin.ids(), gb.to_rows())?;
        let bigru = Layer::BiGru {
            spec: p.fwd.spec,
            fwd: p.fwd.weights(ws),
            bwd: p.bwd.weights(ws),
            seq_len: nf,
        };
        let ids: Vec<usize> = p.fwd.ids.iter().chain(&p.bwd.ids).copied().collect();
        let gr = back.rows(bigru, &ids, gr)?;
        add(&g1, &FeatureMap::from_rows(&gr, nb, nt, nf)?)
    }

    /// Mask (B, 1, T, F0) from features (B, 3, T, F0).
    pub fn enhancer(&self, feats: &FeatureMap, st: &mut NetState, rec: &mut Rec) -> Result<FeatureMap> {
        let l = self.layout;
        let mut skips = Vec::with_capacity(l.enc.len());
        let mut x = feats.clone();
        for (i, b) in l.enc.iter().enumerate() {
            x = self.encoder(i, b, &x, st, rec)?;
            skips.push(x.clone());
        }
        for (p, s) in l.dpr.iter().zip(st.dpr.iter_mut()) {
            x = self.dpr(p, &x, s, rec)?;
        }
        for (j, b) in l.dec.iter().enumerate() {
            x = self.decoder(j, b, &x, &skips[b.skip], st, rec)?;
        }
        let cat = with_history(&x, &mut st.out)?;
        let m = rec.map(l.out_conv.layer(self.ws), cat)?;
        rec.map(
            Layer::Lsigmoid {
                alpha: self.ws.data(l.alpha),
                beta: self.beta,
            },
            m,
        )
    }

    pub fn enhancer_back(&self, g_mask: &FeatureMap, back: &mut Back) -> Result<()> {
        let l = self.layout;
        let lsig = Layer::Lsigmoid {
            alpha: self.ws.data(l.alpha),
            beta: self.beta,
        };
        let g = back.map(lsig, &[l.alpha], g_mask.clone())?;
        let g = back.map(l.out_conv.layer(self.ws), &l.out_conv.ids(), g)?;
        let mut g = drop_history(&g, l.out_conv.history());
        let mut g_skips: Vec<Option<FeatureMap>> = vec![None; l.enc.len()];
        for b in l.dec.iter().rev() {
            let (gx, gs) = self.decoder_back(b, g, back)?;
            g_skips[b.skip] = Some(gs);
            g = gx;
        }
        for p in l.dpr.iter().rev() {
            g = self.dpr_back(p, g, back)?;
        }
        for (i, b) in l.enc.iter().enumerate().rev() {
            if let Some(gs) = &g_skips[i] {
                g.add_assign(gs)?;
            }
            g = self.encoder_back(b, g, back)?;
        }
        Ok(())
    }

    /// Per-frame noise probabilities from a log-mel map (B, 1, T, M).
    pub fn detector(&self, mel: &FeatureMap, st: &mut DetectorState, rec: &mut Rec) -> Result<Vec<f64>> {
        let l = self.layout;
        let mut x = mel.clone();
        for (b, hist) in l.nd.iter().zip(st.hist.iter_mut()) {
            check_dim("detector block input", "freqs", b.in_freqs, x.freqs())?;
            let cat = with_history(&x, hist)?;
            x = rec.map(b.conv.layer(self.ws), cat)?;
            x = rec.map(b.norm.layer(self.ws), x)?;
            x = rec.map(Layer::Prelu { slope: self.ws.data(b.act) }, x)?;
        }
        let y = rec.rows(l.nd_head.layer(self.ws), flatten_frames(&x))?;
        let y = rec.rows(Layer::Sigmoid, y)?;
        Ok(y.into_vec())
    }

    pub fn detector_back(&self, g_prob: &[f64], back: &mut Back) -> Result<()> {
        let l = self.layout;
        let last = l.nd.last().expect("validated detector has blocks");
        let dims = [1, last.conv.spec.out_ch, g_prob.len(), last.out_freqs];
        let g = Matrix::from_vec(g_prob.len(), 1, g_prob.to_vec())?;
        let g = back.rows(Layer::Sigmoid, &[], g)?;
        let g = back.rows(l.nd_head.layer(self.ws), &l.nd_head.ids(), g)?;
        let mut g = unflatten_frames(&g, dims);
        for b in l.nd.iter().rev() {
            g = back.map(Layer::Prelu { slope: self.ws.data(b.act) }, &[b.act], g)?;
            g = back.map(b.norm.layer(self.ws), &b.norm.ids(), g)?;
            g = back.map(b.conv.layer(self.ws), &b.conv.ids(), g)?;
            g = drop_history(&g, b.conv.history());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_rows_round_trip() {
        let x = FeatureMap::from_fn([1, 3, 4, 5], |_, c, t, f| (c * 100 + t * 10 + f) as f64);
        let m = to_time_rows(&x);
        assert_eq!(m.get(2 * 4 + 3, 1), 132.0);
        assert_eq!(from_time_rows(&m, 1, 4, 5), x);
    }

    #[test]
    fn flatten_round_trip() {
        let x = FeatureMap::from_fn([1, 2, 3, 4], |_, c, t, f| (c * 100 + t * 10 + f) as f64);
        let m = flatten_frames(&x);
        assert_eq!(m.get(1, 4 + 2), 112.0);
        assert_eq!(unflatten_frames(&m, x.dims()), x);
    }

    #[test]
    fn history_keeps_newest_frames() {
        let mut hist = FeatureMap::zeros(1, 1, 2, 1);
        let x = FeatureMap::from_fn([1, 1, 3, 1], |_, _, t, _| t as f64 + 1.0);
        let cat = with_history(&x, &mut hist).unwrap();
        assert_eq!(cat.data(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(hist.data(), &[2.0, 3.0]);
    }
}
