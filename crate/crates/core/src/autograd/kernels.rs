//! Numeric kernels behind the graph operations. Shapes are validated by the
//! callers in `graph.rs`; these functions assume consistent dimensions.

use alloc::vec;
use alloc::vec::Vec;

use super::real::{gemm, Layout};
use super::Real;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvDims {
    #[inline]
    fn src(&self, t: usize, j: usize) -> Option<usize> {
        let pos = (t * self.stride + j) as isize - self.pad as isize;
        if pos >= 0 && (pos as usize) < self.len_in {
            Some(pos as usize)
        } else {
            None
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

// cols[(ci * k + j) * len_out + t] = x[ci, t*stride - pad + j]
fn im2col<T: Real>(x: &[T], d: &ConvDims, cols: &mut [T]) {
    for ci in 0..d.c_in {
        let xrow = &x[ci * d.len_in..(ci + 1) * d.len_in];
        for j in 0..d.kernel {
            let crow = &mut cols[(ci * d.kernel + j) * d.len_out..(ci * d.kernel + j + 1) * d.len_out];
            for (t, c) in crow.iter_mut().enumerate() {
                *c = match d.src(t, j) {
                    Some(p) => xrow[p],
                    None => T::zero(),
                };
            }
        }
    }
}

fn col2im_add<T: Real>(cols: &[T], d: &ConvDims, gx: &mut [T]) {
    for ci in 0..d.c_in {
        for j in 0..d.kernel {
            let crow = &cols[(ci * d.kernel + j) * d.len_out..(ci * d.kernel + j + 1) * d.len_out];
            for (t, &c) in crow.iter().enumerate() {
                if let Some(p) = d.src(t, j) {
                    gx[ci * d.len_in + p] = gx[ci * d.len_in + p] + c;
                }
            }
        }
    }
}

/// Dense (groups = 1) 1-D cross-correlation. `w` is `[c_out, c_in, k]`.
pub(crate) fn conv1d_forward<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, d: &ConvDims, y: &mut [T]) {
    let ck = d.c_in * d.kernel;
    let mut cols = if d.is_pointwise() { Vec::new() } else { vec![T::zero(); ck * d.len_out] };
    for b in 0..d.batch {
        let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
        let yb = &mut y[b * d.c_out * d.len_out..(b + 1) * d.c_out * d.len_out];
        let src: &[T] = if d.is_pointwise() {
            xb
        } else {
            im2col(xb, d, &mut cols);
            &cols
        };
        gemm(
            d.c_out,
            ck,
            d.len_out,
            w,
            Layout::rows(ck),
            src,
            Layout::rows(d.len_out),
            yb,
            Layout::rows(d.len_out),
            false,
        );
        if let Some(bias) = bias {
            for (co, row) in yb.chunks_mut(d.len_out).enumerate() {
                for v in row {
                    *v = *v + bias[co];
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    d: &ConvDims,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let ck = d.c_in * d.kernel;
    let mut cols = if d.is_pointwise() { Vec::new() } else { vec![T::zero(); ck * d.len_out] };
    let mut dcols = if d.is_pointwise() || gx.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); ck * d.len_out]
    };
    for b in 0..d.batch {
        let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
        let gyb = &gy[b * d.c_out * d.len_out..(b + 1) * d.c_out * d.len_out];
        if let Some(gw) = gw.as_deref_mut() {
            let src: &[T] = if d.is_pointwise() {
                xb
            } else {
                im2col(xb, d, &mut cols);
                &cols
            };
            // gw (c_out x ck) += gy_b (c_out x len_out) * cols^T
            gemm(
                d.c_out,
                d.len_out,
                ck,
                gyb,
                Layout::rows(d.len_out),
                src,
                Layout::transposed(d.len_out),
                gw,
                Layout::rows(ck),
                true,
            );
        }
        if let Some(gx) = gx.as_deref_mut() {
            let gxb = &mut gx[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
            if d.is_pointwise() {
                gemm(
                    ck,
                    d.c_out,
                    d.len_out,
                    w,
                    Layout::transposed(ck),
                    gyb,
                    Layout::rows(d.len_out),
                    gxb,
                    Layout::rows(d.len_out),
                    true,
                );
            } else {
                gemm(
                    ck,
                    d.c_out,
                    d.len_out,
                    w,
                    Layout::transposed(ck),
                    gyb,
                    Layout::rows(d.len_out),
                    &mut dcols,
                    Layout::rows(d.len_out),
                    false,
                );
                col2im_add(&dcols, d, gxb);
            }
        }
        if let Some(gb) = gb.as_deref_mut() {
            for (co, row) in gyb.chunks(d.len_out).enumerate() {
                gb[co] = gb[co] + row.iter().copied().sum::<T>();
            }
        }
    }
}

/// Depth-wise 1-D convolution, one filter per channel. `w` is `[c, 1, k]`.
pub(crate) fn depthwise1d_forward<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, d: &ConvDims, y: &mut [T]) {
    for b in 0..d.batch {
        for c in 0..d.c_in {
            let xr = &x[(b * d.c_in + c) * d.len_in..(b * d.c_in + c + 1) * d.len_in];
            let wr = &w[c * d.kernel..(c + 1) * d.kernel];
            let yr = &mut y[(b * d.c_in + c) * d.len_out..(b * d.c_in + c + 1) * d.len_out];
            let b0 = bias.map_or(T::zero(), |bb| bb[c]);
            for (t, out) in yr.iter_mut().enumerate() {
                let mut acc = b0;
                for (j, &wj) in wr.iter().enumerate() {
                    if let Some(p) = d.src(t, j) {
                        acc = acc + wj * xr[p];
                    }
                }
                *out = acc;
            }
        }
    }
}

pub(crate) fn depthwise1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    d: &ConvDims,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    for b in 0..d.batch {
        for c in 0..d.c_in {
            let row_in = (b * d.c_in + c) * d.len_in;
            let row_out = (b * d.c_in + c) * d.len_out;
            for t in 0..d.len_out {
                let g = gy[row_out + t];
                if g == T::zero() {
                    continue;
                }
                for j in 0..d.kernel {
                    if let Some(p) = d.src(t, j) {
                        if let Some(gx) = gx.as_deref_mut() {
                            gx[row_in + p] = gx[row_in + p] + g * w[c * d.kernel + j];
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            gw[c * d.kernel + j] = gw[c * d.kernel + j] + g * x[row_in + p];
                        }
                    }
                }
                if let Some(gb) = gb.as_deref_mut() {
                    gb[c] = gb[c] + g;
                }
            }
        }
    }
}

/// Transposed 1-D convolution (adjoint of [`conv1d_forward`]). `w` is
/// `[c_in, c_out, k]`; `len_in` is the input length, `len_out` the output.
pub(crate) fn conv_transpose1d_forward<T: Real>(x: &[T], w: &[T], d: &ConvDims, y: &mut [T]) {
    let ok = d.c_out * d.kernel;
    let mut z = vec![T::zero(); ok * d.len_in];
    y.iter_mut().for_each(|v| *v = T::zero());
    for b in 0..d.batch {
        let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
        // z (ok x len_in) = W^T (ok x c_in) * x_b (c_in x len_in)
        gemm(
            ok,
            d.c_in,
            d.len_in,
            w,
            Layout::transposed(ok),
            xb,
            Layout::rows(d.len_in),
            &mut z,
            Layout::rows(d.len_in),
            false,
        );
        let yb = &mut y[b * d.c_out * d.len_out..(b + 1) * d.c_out * d.len_out];
        for co in 0..d.c_out {
            for j in 0..d.kernel {
                let zr = &z[(co * d.kernel + j) * d.len_in..(co * d.kernel + j + 1) * d.len_in];
                for (l, &zv) in zr.iter().enumerate() {
                    let pos = (l * d.stride + j) as isize - d.pad as isize;
                    if pos >= 0 && (pos as usize) < d.len_out {
                        let idx = co * d.len_out + pos as usize;
                        yb[idx] = yb[idx] + zv;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_transpose1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    d: &ConvDims,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
) {
    let ok = d.c_out * d.kernel;
    let mut dz = vec![T::zero(); ok * d.len_in];
    for b in 0..d.batch {
        let gyb = &gy[b * d.c_out * d.len_out..(b + 1) * d.c_out * d.len_out];
        for co in 0..d.c_out {
            for j in 0..d.kernel {
                let row = &mut dz[(co * d.kernel + j) * d.len_in..(co * d.kernel + j + 1) * d.len_in];
                for (l, v) in row.iter_mut().enumerate() {
                    let pos = (l * d.stride + j) as isize - d.pad as isize;
                    *v = if pos >= 0 && (pos as usize) < d.len_out {
                        gyb[co * d.len_out + pos as usize]
                    } else {
                        T::zero()
                    };
                }
            }
        }
        if let Some(gx) = gx.as_deref_mut() {
            let gxb = &mut gx[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
            gemm(
                d.c_in,
                ok,
                d.len_in,
                w,
                Layout::rows(ok),
                &dz,
                Layout::rows(d.len_in),
                gxb,
                Layout::rows(d.len_in),
                true,
            );
        }
        if let Some(gw) = gw.as_deref_mut() {
            let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
            gemm(
                d.c_in,
                d.len_in,
                ok,
                xb,
                Layout::rows(d.len_in),
                &dz,
                Layout::transposed(d.len_in),
                gw,
                Layout::rows(ok),
                true,
            );
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dw2dDims {
    pub batch: usize,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

pub(crate) fn depthwise2d_forward<T: Real>(x: &[T], w: &[T], bias: &[T], d: &Dw2dDims, y: &mut [T]) {
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    let plane = d.h * d.w;
    for b in 0..d.batch {
        for c in 0..d.channels {
            let base = (b * d.channels + c) * plane;
            let wk = &w[c * d.kh * d.kw..(c + 1) * d.kh * d.kw];
            if d.kh == 1 && d.kw == 1 {
                for i in 0..plane {
                    y[base + i] = wk[0] * x[base + i] + bias[c];
                }
                continue;
            }
            for i in 0..d.h {
                for j in 0..d.w {
                    let mut acc = bias[c];
                    for a in 0..d.kh {
                        let si = i as isize + a as isize - ph as isize;
                        if si < 0 || si as usize >= d.h {
                            continue;
                        }
                        for bb in 0..d.kw {
                            let sj = j as isize + bb as isize - pw as isize;
                            if sj < 0 || sj as usize >= d.w {
                                continue;
                            }
                            acc = acc + wk[a * d.kw + bb] * x[base + si as usize * d.w + sj as usize];
                        }
                    }
                    y[base + i * d.w + j] = acc;
                }
            }
        }
    }
}

pub(crate) fn depthwise2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    d: &Dw2dDims,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    let plane = d.h * d.w;
    for b in 0..d.batch {
        for c in 0..d.channels {
            let base = (b * d.channels + c) * plane;
            let kbase = c * d.kh * d.kw;
            for i in 0..d.h {
                for j in 0..d.w {
                    let g = gy[base + i * d.w + j];
                    if let Some(gb) = gb.as_deref_mut() {
                        gb[c] = gb[c] + g;
                    }
                    for a in 0..d.kh {
                        let si = i as isize + a as isize - ph as isize;
                        if si < 0 || si as usize >= d.h {
                            continue;
                        }
                        for bb in 0..d.kw {
                            let sj = j as isize + bb as isize - pw as isize;
                            if sj < 0 || sj as usize >= d.w {
                                continue;
                            }
                            let src = base + si as usize * d.w + sj as usize;
                            if let Some(gx) = gx.as_deref_mut() {
                                gx[src] = gx[src] + g * w[kbase + a * d.kw + bb];
                            }
                            if let Some(gw) = gw.as_deref_mut() {
                                gw[kbase + a * d.kw + bb] = gw[kbase + a * d.kw + bb] + g * x[src];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// `dst[out_index] = src[in_index]` where `out.shape[i] = in.shape[perm[i]]`.
pub(crate) fn permute_copy<T: Copy>(src: &[T], shape: &[usize], perm: &[usize], dst: &mut [T]) {
    let rank = shape.len();
    if rank == 0 || src.is_empty() {
        return;
    }
    let in_strides = row_major_strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let step: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let last = rank - 1;
    let inner = out_shape[last];
    let inner_step = step[last];
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    let mut o = 0usize;
    while o < dst.len() {
        let mut off = base;
        for v in &mut dst[o..o + inner] {
            *v = src[off];
            off += inner_step;
        }
        o += inner;
        // advance the outer multi-index
        let mut d = last;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            base += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            base -= step[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Window bounds of adaptive average pooling from `len_in` to `len_out`.
pub(crate) fn pool_window(i: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let start = i * len_in / len_out;
    let end = ((i + 1) * len_in).div_ceil(len_out);
    (start, end.max(start + 1).min(len_in))
}

pub(crate) fn nearest_source(i: usize, len_in: usize, len_out: usize) -> usize {
    (i * len_in / len_out).min(len_in - 1)
}
