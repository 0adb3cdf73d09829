//! Stride-1 cross-correlations with 3x3 spatial kernels.
//!
//! Spatial axes are zero-padded by one on each side so height and width are
//! preserved; the spectral (depth) axis of the 3-D variant is unpadded.

use rayon::prelude::*;

use super::{Float, Tensor};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    in_ch: usize,
    out_ch: usize,
    depth: usize,
    kd: usize,
    h: usize,
    w: usize,
}

impl Geometry {
    fn out_depth(&self) -> usize {
        self.depth + 1 - self.kd
    }

    fn in_block(&self) -> usize {
        self.depth * self.h * self.w
    }

    fn out_block(&self) -> usize {
        self.out_depth() * self.h * self.w
    }

    fn taps(&self) -> usize {
        self.kd * KERNEL * KERNEL
    }
}

/// Valid `[lo, hi)` range of output coordinates for spatial tap offset `t`.
fn span(t: usize, len: usize) -> (usize, usize) {
    match t {
        0 => (1.min(len), len),
        1 => (0, len),
        _ => (0, len.saturating_sub(1)),
    }
}

fn forward<T: Float>(g: Geometry, x: &[T], k: &[T], b: &[T]) -> Vec<T> {
    let (hw, w) = (g.h * g.w, g.w);
    let mut out = vec![T::zero(); g.n * g.out_ch * g.out_block()];
    out.par_chunks_mut(g.out_block().max(1)).enumerate().for_each(|(idx, dst)| {
        let (s, o) = (idx / g.out_ch, idx % g.out_ch);
        dst.fill(b[o]);
        for c in 0..g.in_ch {
            let src = &x[(s * g.in_ch + c) * g.in_block()..][..g.in_block()];
            let kern = &k[(o * g.in_ch + c) * g.taps()..][..g.taps()];
            for a in 0..g.kd {
                for i in 0..KERNEL {
                    let (ylo, yhi) = span(i, g.h);
                    for j in 0..KERNEL {
                        let wv = kern[(a * KERNEL + i) * KERNEL + j];
                        if wv == T::zero() {
                            continue;
                        }
                        let (xlo, xhi) = span(j, g.w);
                        for z in 0..g.out_depth() {
                            let plane_in = &src[(z + a) * hw..][..hw];
                            let plane_out = &mut dst[z * hw..][..hw];
                            for y in ylo..yhi {
                                let yi = y + i - 1;
                                let row_out = &mut plane_out[y * w..][..w];
                                let row_in = &plane_in[yi * w..][..w];
                                for xx in xlo..xhi {
                                    row_out[xx] = row_out[xx] + wv * row_in[xx + j - 1];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dk: Tensor<T>,
    pub db: Tensor<T>,
}

fn backward<T: Float>(g: Geometry, x: &[T], k: &[T], dy: &[T], need_dx: bool) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (hw, w) = (g.h * g.w, g.w);

    let mut db = vec![T::zero(); g.out_ch];
    for s in 0..g.n {
        for (o, acc) in db.iter_mut().enumerate() {
            let block = &dy[(s * g.out_ch + o) * g.out_block()..][..g.out_block()];
            *acc = block.iter().fold(*acc, |a, &v| a + v);
        }
    }

    let mut dk = vec![T::zero(); g.out_ch * g.in_ch * g.taps()];
    dk.par_chunks_mut((g.in_ch * g.taps()).max(1)).enumerate().for_each(|(o, dko)| {
        for s in 0..g.n {
            let grad = &dy[(s * g.out_ch + o) * g.out_block()..][..g.out_block()];
            for c in 0..g.in_ch {
                let src = &x[(s * g.in_ch + c) * g.in_block()..][..g.in_block()];
                for a in 0..g.kd {
                    for i in 0..KERNEL {
                        let (ylo, yhi) = span(i, g.h);
                        for j in 0..KERNEL {
                            let (xlo, xhi) = span(j, g.w);
                            let mut acc = T::zero();
                            for z in 0..g.out_depth() {
                                let plane_in = &src[(z + a) * hw..][..hw];
                                let plane_g = &grad[z * hw..][..hw];
                                for y in ylo..yhi {
                                    let yi = y + i - 1;
                                    for xx in xlo..xhi {
                                        acc = acc + plane_g[y * w + xx] * plane_in[yi * w + xx + j - 1];
                                    }
                                }
                            }
                            let slot = &mut dko[c * g.taps() + (a * KERNEL + i) * KERNEL + j];
                            *slot = *slot + acc;
                        }
                    }
                }
            }
        }
    });

    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); g.n * g.in_ch * g.in_block()];
        dx.par_chunks_mut((g.in_ch * g.in_block()).max(1)).enumerate().for_each(|(s, dxs)| {
            for o in 0..g.out_ch {
                let grad = &dy[(s * g.out_ch + o) * g.out_block()..][..g.out_block()];
                for c in 0..g.in_ch {
                    let dst = &mut dxs[c * g.in_block()..][..g.in_block()];
                    let kern = &k[(o * g.in_ch + c) * g.taps()..][..g.taps()];
                    for a in 0..g.kd {
                        for i in 0..KERNEL {
                            let (ylo, yhi) = span(i, g.h);
                            for j in 0..KERNEL {
                                let wv = kern[(a * KERNEL + i) * KERNEL + j];
                                let (xlo, xhi) = span(j, g.w);
                                for z in 0..g.out_depth() {
                                    let plane_g = &grad[z * hw..][..hw];
                                    let plane_dx = &mut dst[(z + a) * hw..][..hw];
                                    for y in ylo..yhi {
                                        let yi = y + i - 1;
                                        for xx in xlo..xhi {
                                            let t = &mut plane_dx[yi * w + xx + j - 1];
                                            *t = *t + wv * plane_g[y * w + xx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
        dx
    });
    (dx, dk, db)
}

fn geometry3d<T: Float>(x: &Tensor<T>, k: &Tensor<T>) -> Result<Geometry> {
    let (xs, ks) = (x.shape(), k.shape());
    if xs.len() != 5 || ks.len() != 5 || ks[3] != KERNEL || ks[4] != KERNEL {
        return Err(Error::Dimension(format!("conv3d input {xs:?} / kernel {ks:?} have wrong rank")));
    }
    if xs[1] != ks[1] {
        return Err(Error::Dimension(format!("conv3d input has {} channels, kernel expects {}", xs[1], ks[1])));
    }
    if xs[2] < ks[2] {
        return Err(Error::Dimension(format!("conv3d depth {} is smaller than kernel depth {}", xs[2], ks[2])));
    }
    Ok(Geometry { n: xs[0], in_ch: xs[1], out_ch: ks[0], depth: xs[2], kd: ks[2], h: xs[3], w: xs[4] })
}

fn geometry2d<T: Float>(x: &Tensor<T>, k: &Tensor<T>) -> Result<Geometry> {
    let (xs, ks) = (x.shape(), k.shape());
    if xs.len() != 4 || ks.len() != 4 || ks[2] != KERNEL || ks[3] != KERNEL {
        return Err(Error::Dimension(format!("conv2d input {xs:?} / kernel {ks:?} have wrong rank")));
    }
    if xs[1] != ks[1] {
        return Err(Error::Dimension(format!("conv2d input has {} channels, kernel expects {}", xs[1], ks[1])));
    }
    Ok(Geometry { n: xs[0], in_ch: xs[1], out_ch: ks[0], depth: 1, kd: 1, h: xs[2], w: xs[3] })
}

fn check_bias<T: Float>(b: &Tensor<T>, out_ch: usize) -> Result<()> {
    if b.shape() != [out_ch] {
        return Err(Error::Dimension(format!("conv bias {:?} does not match {out_ch} filters", b.shape())));
    }
    Ok(())
}

/// `x: [n, ch, d, h, w]`, `kernel: [oc, ch, kd, 3, 3]` -> `[n, oc, d - kd + 1, h, w]`.
pub fn conv3d_forward<T: Float>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry3d(x, kernel)?;
    check_bias(bias, g.out_ch)?;
    let out = forward(g, x.data(), kernel.data(), bias.data());
    Tensor::new(vec![g.n, g.out_ch, g.out_depth(), g.h, g.w], out)
}

pub fn conv3d_backward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let g = geometry3d(x, kernel)?;
    if dy.shape() != [g.n, g.out_ch, g.out_depth(), g.h, g.w] {
        return Err(Error::Dimension(format!("conv3d upstream gradient has shape {:?}", dy.shape())));
    }
    let (dx, dk, db) = backward(g, x.data(), kernel.data(), dy.data(), need_dx);
    Ok(ConvGrads {
        dx: dx.map(|d| Tensor::new(x.shape().to_vec(), d)).transpose()?,
        dk: Tensor::new(kernel.shape().to_vec(), dk)?,
        db: Tensor::new(vec![g.out_ch], db)?,
    })
}

/// `x: [n, ch, h, w]`, `kernel: [oc, ch, 3, 3]` -> `[n, oc, h, w]`.
pub fn conv2d_forward<T: Float>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry2d(x, kernel)?;
    check_bias(bias, g.out_ch)?;
    let out = forward(g, x.data(), kernel.data(), bias.data());
    Tensor::new(vec![g.n, g.out_ch, g.h, g.w], out)
}

pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let g = geometry2d(x, kernel)?;
    if dy.shape() != [g.n, g.out_ch, g.h, g.w] {
        return Err(Error::Dimension(format!("conv2d upstream gradient has shape {:?}", dy.shape())));
    }
    let (dx, dk, db) = backward(g, x.data(), kernel.data(), dy.data(), need_dx);
    Ok(ConvGrads {
        dx: dx.map(|d| Tensor::new(x.shape().to_vec(), d)).transpose()?,
        dk: Tensor::new(kernel.shape().to_vec(), dk)?,
        db: Tensor::new(vec![g.out_ch], db)?,
    })
}
