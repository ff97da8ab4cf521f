//! Dense row-major containers used across the crate.

use crate::error::{check_dim, Result};

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("Matrix::from_vec", "len", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

/// Rank-4 real array laid out as (batch, channel, time, frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(b: usize, c: usize, t: usize, f: usize) -> Self {
        Self {
            dims: [b, c, t, f],
            data: vec![0.0; b * c * t * f],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        check_dim("FeatureMap::from_vec", "len", dims.iter().product(), data.len())?;
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [nb, nc, nt, nf] = dims;
        let mut data = Vec::with_capacity(nb * nc * nt * nf);
        for b in 0..nb {
            for c in 0..nc {
                for t in 0..nt {
                    for k in 0..nf {
                        data.push(f(b, c, t, k));
                    }
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }
    #[inline]
    pub fn frames(&self) -> usize {
        self.dims[2]
    }
    #[inline]
    pub fn freqs(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, t: usize, f: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + t) * self.dims[3] + f
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize, f: usize) -> f64 {
        self.data[self.index(b, c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, f: usize, v: f64) {
        let i = self.index(b, c, t, f);
        self.data[i] = v;
    }

    /// Contiguous frequency row at (b, c, t).
    #[inline]
    pub fn freq_row(&self, b: usize, c: usize, t: usize) -> &[f64] {
        let i = self.index(b, c, t, 0);
        &self.data[i..i + self.dims[3]]
    }

    #[inline]
    pub fn freq_row_mut(&mut self, b: usize, c: usize, t: usize) -> &mut [f64] {
        let i = self.index(b, c, t, 0);
        let n = self.dims[3];
        &mut self.data[i..i + n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same("FeatureMap::add_assign", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn check_same(&self, context: &'static str, other: &Self) -> Result<()> {
        check_dim(context, "batch", self.dims[0], other.dims[0])?;
        check_dim(context, "channels", self.dims[1], other.dims[1])?;
        check_dim(context, "frames", self.dims[2], other.dims[2])?;
        check_dim(context, "freqs", self.dims[3], other.dims[3])
    }

    /// Bins `[start, end)` along frequency.
    pub fn slice_freq(&self, start: usize, end: usize) -> Self {
        let [nb, nc, nt, _] = self.dims;
        let width = end - start;
        let mut out = Self::zeros(nb, nc, nt, width);
        for b in 0..nb {
            for c in 0..nc {
                for t in 0..nt {
                    out.freq_row_mut(b, c, t)
                        .copy_from_slice(&self.freq_row(b, c, t)[start..end]);
                }
            }
        }
        out
    }

    pub fn concat_freq(a: &Self, b: &Self) -> Result<Self> {
        check_dim("concat_freq", "batch", a.dims[0], b.dims[0])?;
        check_dim("concat_freq", "channels", a.dims[1], b.dims[1])?;
        check_dim("concat_freq", "frames", a.dims[2], b.dims[2])?;
        let [nb, nc, nt, fa] = a.dims;
        let fb = b.dims[3];
        let mut out = Self::zeros(nb, nc, nt, fa + fb);
        for bi in 0..nb {
            for c in 0..nc {
                for t in 0..nt {
                    let row = out.freq_row_mut(bi, c, t);
                    row[..fa].copy_from_slice(a.freq_row(bi, c, t));
                    row[fa..].copy_from_slice(b.freq_row(bi, c, t));
                }
            }
        }
        Ok(out)
    }

    /// Frames `[start, end)` along time.
    pub fn slice_time(&self, start: usize, end: usize) -> Self {
        let [nb, nc, _, nf] = self.dims;
        let mut out = Self::zeros(nb, nc, end - start, nf);
        for b in 0..nb {
            for c in 0..nc {
                for t in start..end {
                    out.freq_row_mut(b, c, t - start)
                        .copy_from_slice(self.freq_row(b, c, t));
                }
            }
        }
        out
    }

    pub fn concat_time(a: &Self, b: &Self) -> Result<Self> {
        check_dim("concat_time", "batch", a.dims[0], b.dims[0])?;
        check_dim("concat_time", "channels", a.dims[1], b.dims[1])?;
        check_dim("concat_time", "freqs", a.dims[3], b.dims[3])?;
        let [nb, nc, ta, nf] = a.dims;
        let tb = b.dims[2];
        let mut out = Self::zeros(nb, nc, ta + tb, nf);
        for bi in 0..nb {
            for c in 0..nc {
                for t in 0..ta {
                    out.freq_row_mut(bi, c, t).copy_from_slice(a.freq_row(bi, c, t));
                }
                for t in 0..tb {
                    out.freq_row_mut(bi, c, ta + t)
                        .copy_from_slice(b.freq_row(bi, c, t));
                }
            }
        }
        Ok(out)
    }

    /// Channel vectors as rows ordered by (b, t, f).
    pub fn to_rows(&self) -> Matrix {
        let [nb, nc, nt, nf] = self.dims;
        let mut m = Matrix::zeros(nb * nt * nf, nc);
        for b in 0..nb {
            for c in 0..nc {
                for t in 0..nt {
                    let src = self.freq_row(b, c, t);
                    for (f, &v) in src.iter().enumerate() {
                        m.set((b * nt + t) * nf + f, c, v);
                    }
                }
            }
        }
        m
    }

    /// Inverse of [`FeatureMap::to_rows`].
    pub fn from_rows(rows: &Matrix, b: usize, t: usize, f: usize) -> Result<Self> {
        check_dim("FeatureMap::from_rows", "rows", b * t * f, rows.rows())?;
        let c = rows.cols();
        let mut out = Self::zeros(b, c, t, f);
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    let dst = out.freq_row_mut(bi, ci, ti);
                    for (fi, d) in dst.iter_mut().enumerate() {
                        *d = rows.get((bi * t + ti) * f + fi, ci);
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let fm = FeatureMap::from_fn([2, 3, 4, 5], |b, c, t, f| {
            (b * 1000 + c * 100 + t * 10 + f) as f64
        });
        let rows = fm.to_rows();
        assert_eq!(rows.rows(), 2 * 4 * 5);
        assert_eq!(rows.get((4 + 2) * 5 + 3, 1), 1123.0);
        let back = FeatureMap::from_rows(&rows, 2, 4, 5).unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn slice_and_concat_are_inverse() {
        let fm = FeatureMap::from_fn([1, 2, 3, 8], |_, c, t, f| (c * 31 + t * 7 + f) as f64);
        let lo = fm.slice_freq(0, 2);
        let hi = fm.slice_freq(2, 8);
        assert_eq!(FeatureMap::concat_freq(&lo, &hi).unwrap(), fm);
        let a = fm.slice_time(0, 1);
        let b = fm.slice_time(1, 3);
        assert_eq!(FeatureMap::concat_time(&a, &b).unwrap(), fm);
    }
}
