use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::nn::activation::sigmoid;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruSpec {
    pub input: usize,
    pub hidden: usize,
}

impl GruSpec {
    pub fn new(input: usize, hidden: usize) -> Self {
        Self { input, hidden }
    }

    /// Parameter tensors in storage order: `w_ih`, `w_hh`, `b_ih`, `b_hh`.
    pub fn shapes(&self) -> [Vec<usize>; 4] {
        let (i, h) = (self.input, self.hidden);
        [vec![3 * h, i], vec![3 * h, h], vec![3 * h], vec![3 * h]]
    }

    pub fn param_count(&self) -> usize {
        3 * self.hidden * (self.input + self.hidden + 2)
    }

    /// Multiply-accumulates per time step (weight products only).
    pub fn macs_per_step(&self) -> usize {
        3 * self.hidden * (self.input + self.hidden)
    }
}

/// Borrowed GRU weights. Gate blocks are stacked in the order reset, update,
/// candidate.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
}

impl GruWeights<'_> {
    fn check(&self, spec: &GruSpec) -> Result<()> {
        let (i, h) = (spec.input, spec.hidden);
        check_dim("gru", "w_ih_len", 3 * h * i, self.w_ih.len())?;
        check_dim("gru", "w_hh_len", 3 * h * h, self.w_hh.len())?;
        check_dim("gru", "b_ih_len", 3 * h, self.b_ih.len())?;
        check_dim("gru", "b_hh_len", 3 * h, self.b_hh.len())
    }
}

#[inline]
fn matvec_rows(w: &[f64], cols: usize, row0: usize, rows: usize, x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate().take(rows) {
        let r = &w[(row0 + k) * cols..(row0 + k + 1) * cols];
        *o = r.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

struct StepTrace {
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    h: Vec<f64>,
}

fn step_traced(spec: &GruSpec, w: &GruWeights, x: &[f64], h: &[f64]) -> StepTrace {
    let (ni, nh) = (spec.input, spec.hidden);
    let mut gi = vec![0.0; 3 * nh];
    let mut gh = vec![0.0; 2 * nh];
    matvec_rows(w.w_ih, ni, 0, 3 * nh, x, &mut gi);
    matvec_rows(w.w_hh, nh, 0, 2 * nh, h, &mut gh);
    let mut r = vec![0.0; nh];
    let mut z = vec![0.0; nh];
    for k in 0..nh {
        r[k] = sigmoid(gi[k] + w.b_ih[k] + gh[k] + w.b_hh[k]);
        z[k] = sigmoid(gi[nh + k] + w.b_ih[nh + k] + gh[nh + k] + w.b_hh[nh + k]);
    }
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let mut hn = vec![0.0; nh];
    matvec_rows(w.w_hh, nh, 2 * nh, nh, &rh, &mut hn);
    let mut n = vec![0.0; nh];
    let mut out = vec![0.0; nh];
    for k in 0..nh {
        n[k] = (gi[2 * nh + k] + w.b_ih[2 * nh + k] + hn[k] + w.b_hh[2 * nh + k]).tanh();
        out[k] = (1.0 - z[k]) * n[k] + z[k] * h[k];
    }
    StepTrace { r, z, n, h: out }
}

/// One recurrence step; the streaming path calls this directly so that
/// frame-by-frame and whole-sequence runs agree exactly.
pub fn gru_step(spec: &GruSpec, w: &GruWeights, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    w.check(spec)?;
    check_dim("gru_step", "input", spec.input, x.len())?;
    check_dim("gru_step", "hidden", spec.hidden, h.len())?;
    Ok(step_traced(spec, w, x, h).h)
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Matrix,
    /// Hidden states h_0..h_T, one per row.
    hs: Matrix,
    r: Matrix,
    z: Matrix,
    n: Matrix,
}

impl GruCache {
    pub fn final_state(&self) -> &[f64] {
        self.hs.row(self.hs.rows() - 1)
    }
}

/// Runs a sequence given as rows of `x`, returning all hidden states (T×H).
pub fn gru_sequence(spec: &GruSpec, w: &GruWeights, x: &Matrix, h0: Option<&[f64]>) -> Result<(Matrix, GruCache)> {
    w.check(spec)?;
    check_dim("gru_sequence", "input", spec.input, x.cols())?;
    let (nt, nh) = (x.rows(), spec.hidden);
    let mut hs = Matrix::zeros(nt + 1, nh);
    if let Some(h0) = h0 {
        check_dim("gru_sequence", "hidden", nh, h0.len())?;
        hs.row_mut(0).copy_from_slice(h0);
    }
    let mut r = Matrix::zeros(nt, nh);
    let mut z = Matrix::zeros(nt, nh);
    let mut n = Matrix::zeros(nt, nh);
    let mut out = Matrix::zeros(nt, nh);
    for t in 0..nt {
        let tr = step_traced(spec, w, x.row(t), hs.row(t));
        r.row_mut(t).copy_from_slice(&tr.r);
        z.row_mut(t).copy_from_slice(&tr.z);
        n.row_mut(t).copy_from_slice(&tr.n);
        out.row_mut(t).copy_from_slice(&tr.h);
        hs.row_mut(t + 1).copy_from_slice(&tr.h);
    }
    Ok((
        out,
        GruCache {
            x: x.clone(),
            hs,
            r,
            z,
            n,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct GruGrads {
    pub input: Matrix,
    pub h0: Vec<f64>,
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

impl GruGrads {
    fn zeros(spec: &GruSpec, steps: usize) -> Self {
        let (i, h) = (spec.input, spec.hidden);
        Self {
            input: Matrix::zeros(steps, i),
            h0: vec![0.0; h],
            w_ih: vec![0.0; 3 * h * i],
            w_hh: vec![0.0; 3 * h * h],
            b_ih: vec![0.0; 3 * h],
            b_hh: vec![0.0; 3 * h],
        }
    }
}

/// Backpropagation through time. `grad_out` is the gradient on every
/// emitted hidden state (T×H).
pub fn gru_backward(spec: &GruSpec, w: &GruWeights, cache: &GruCache, grad_out: &Matrix) -> Result<GruGrads> {
    w.check(spec)?;
    let (ni, nh) = (spec.input, spec.hidden);
    let nt = cache.x.rows();
    check_dim("gru_backward", "steps", nt, grad_out.rows())?;
    check_dim("gru_backward", "hidden", nh, grad_out.cols())?;
    let mut g = GruGrads::zeros(spec, nt);
    let mut dh_next = vec![0.0; nh];
    let mut d_pre = vec![0.0; 3 * nh];
    let mut d_rh = vec![0.0; nh];
    for t in (0..nt).rev() {
        let x = cache.x.row(t);
        let h = cache.hs.row(t);
        let (r, z, n) = (cache.r.row(t), cache.z.row(t), cache.n.row(t));
        let mut dh_prev = vec![0.0; nh];
        for k in 0..nh {
            let dh = grad_out.get(t, k) + dh_next[k];
            dh_prev[k] += dh * z[k];
            let dn = dh * (1.0 - z[k]);
            let dz = dh * (h[k] - n[k]);
            d_pre[nh + k] = dz * z[k] * (1.0 - z[k]);
            d_pre[2 * nh + k] = dn * (1.0 - n[k] * n[k]);
        }
        // candidate: W_hn acts on r ⊙ h
        d_rh.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..nh {
            let dp = d_pre[2 * nh + k];
            let row = (2 * nh + k) * nh;
            for j in 0..nh {
                g.w_hh[row + j] += dp * r[j] * h[j];
                d_rh[j] += w.w_hh[row + j] * dp;
            }
        }
        for k in 0..nh {
            let dr = d_rh[k] * h[k];
            dh_prev[k] += d_rh[k] * r[k];
            d_pre[k] = dr * r[k] * (1.0 - r[k]);
        }
        let gx = g.input.row_mut(t);
        for gate in 0..3 * nh {
            let dp = d_pre[gate];
            g.b_ih[gate] += dp;
            g.b_hh[gate] += dp;
            let wi = &w.w_ih[gate * ni..(gate + 1) * ni];
            let gwi = &mut g.w_ih[gate * ni..(gate + 1) * ni];
            for j in 0..ni {
                gwi[j] += dp * x[j];
                gx[j] += wi[j] * dp;
            }
            if gate < 2 * nh {
                let row = gate * nh;
                for j in 0..nh {
                    g.w_hh[row + j] += dp * h[j];
                    dh_prev[j] += w.w_hh[row + j] * dp;
                }
            }
        }
        dh_next = dh_prev;
    }
    g.h0 = dh_next;
    Ok(g)
}

/// Bidirectional GRU; outputs are `[forward | backward]` per step (T×2H).
#[derive(Debug, Clone)]
pub struct BiGruCache {
    fwd: GruCache,
    bwd: GruCache,
}

fn reverse_rows(m: &Matrix) -> Matrix {
    let n = m.rows();
    Matrix::from_fn(n, m.cols(), |r, c| m.get(n - 1 - r, c))
}

pub fn bigru_forward(
    spec: &GruSpec,
    fwd: &GruWeights,
    bwd: &GruWeights,
    x: &Matrix,
) -> Result<(Matrix, BiGruCache)> {
    let (yf, cf) = gru_sequence(spec, fwd, x, None)?;
    let (yb_rev, cb) = gru_sequence(spec, bwd, &reverse_rows(x), None)?;
    let yb = reverse_rows(&yb_rev);
    let nh = spec.hidden;
    let y = Matrix::from_fn(x.rows(), 2 * nh, |t, k| {
        if k < nh {
            yf.get(t, k)
        } else {
            yb.get(t, k - nh)
        }
    });
    Ok((y, BiGruCache { fwd: cf, bwd: cb }))
}

pub struct BiGruGrads {
    pub input: Matrix,
    pub fwd: GruGrads,
    pub bwd: GruGrads,
}

pub fn bigru_backward(
    spec: &GruSpec,
    fwd: &GruWeights,
    bwd: &GruWeights,
    cache: &BiGruCache,
    grad_out: &Matrix,
) -> Result<BiGruGrads> {
    let nh = spec.hidden;
    check_dim("bigru_backward", "width", 2 * nh, grad_out.cols())?;
    let nt = grad_out.rows();
    let gf = Matrix::from_fn(nt, nh, |t, k| grad_out.get(t, k));
    let gb_rev = Matrix::from_fn(nt, nh, |t, k| grad_out.get(nt - 1 - t, nh + k));
    let df = gru_backward(spec, fwd, &cache.fwd, &gf)?;
    let db = gru_backward(spec, bwd, &cache.bwd, &gb_rev)?;
    let dxb = reverse_rows(&db.input);
    let input = Matrix::from_fn(nt, spec.input, |t, j| df.input.get(t, j) + dxb.get(t, j));
    Ok(BiGruGrads { input, fwd: df, bwd: db })
}
