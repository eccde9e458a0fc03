use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvDims, Dw2dDims};
use super::real::{gemm, Layout};
use super::tensor::{numel, Tensor};
use super::Real;
use crate::metrics::si_snr_with_grad;
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Sum(usize),
    Mean(usize),
    Relu(usize),
    Sigmoid(usize),
    Prelu { x: usize, slope: usize },
    Gln { x: usize, gain: usize, bias: usize, stats: Vec<(T, T)> },
    Conv1d { x: usize, w: usize, b: Option<usize>, dims: ConvDims, depthwise: bool },
    ConvTranspose1d { x: usize, w: usize, dims: ConvDims },
    Depthwise2d { x: usize, w: usize, b: usize, dims: Dw2dDims },
    Linear { x: usize, w: usize, b: Option<usize>, rows: usize, fan_in: usize, fan_out: usize },
    Bmm { a: usize, b: usize, trans_b: bool, batch: usize, m: usize, k: usize, n: usize },
    Softmax(usize),
    Permute { x: usize, perm: Vec<usize> },
    Reshape(usize),
    AvgPool { x: usize, len_in: usize, len_out: usize },
    Nearest { x: usize, len_in: usize, len_out: usize },
    Dropout { x: usize, mask: Vec<T> },
    Slice { x: usize, outer: usize, axis_len: usize, start: usize, len: usize, inner: usize },
    Concat { xs: Vec<(usize, usize)>, outer: usize, inner: usize },
    GatherRows { x: usize, rows: Vec<usize>, row_len: usize },
    Windows { x: usize, rows: usize, len: usize, size: usize, stride: usize, count: usize },
    OverlapAdd { x: usize, rows: usize, len: usize, size: usize, stride: usize, count: usize },
    SiSnr { est: usize, reference: usize, row_len: usize },
}

#[derive(Debug, Clone)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; `None` if `v` does not
    /// require gradients.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted. A graph is built for one forward pass and dropped
/// after [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    training: bool,
    rng: ChaCha8Rng,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::dim(op, a, b));
    }
    Ok(())
}

/// (outer, channels, inner) view used by per-channel operations. Rank 1 is a
/// single channel, rank 2 is `[C, L]`, rank >= 3 is `[B, C, ...]`.
fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    match shape.len() {
        0 => (1, 1, 1),
        1 => (1, 1, shape[0]),
        2 => (1, shape[0], shape[1]),
        _ => (shape[0], shape[1], shape[2..].iter().product()),
    }
}

/// `[B, C, L]` view for 1-D convolutions; rank 2 input is a single batch item.
fn conv_input(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        2 => Ok((1, shape[0], shape[1])),
        3 => Ok((shape[0], shape[1], shape[2])),
        _ => Err(Error::dim(op, shape, &[0, 0, 0])),
    }
}

fn conv_output_shape(rank: usize, batch: usize, channels: usize, len: usize) -> Vec<usize> {
    if rank == 2 {
        vec![channels, len]
    } else {
        vec![batch, channels, len]
    }
}

impl<T: Real> Graph<T> {
    /// Graph in evaluation mode (dropout disabled).
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Graph in training mode; dropout masks are drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, tensor: Tensor<T>, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: tensor.into_data(),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor, false)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("graph node holds a consistent tensor")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, inputs: &[usize]) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.shape(a), self.shape(b))?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.shape(a), self.shape(b))?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x - y).collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.shape(a), self.shape(b))?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).iter().map(|&x| x * c).collect();
        self.push(self.shape(a).to_vec(), value, Op::Scale(a.0, c), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.value(a).len()).unwrap_or_else(T::one);
        let s: T = self.value(a).iter().copied().sum();
        self.push(vec![1], vec![s / n], Op::Mean(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| x.max(T::zero())).collect();
        self.push(self.shape(a).to_vec(), value, Op::Relu(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .iter()
            .map(|&x| T::one() / (T::one() + (-x).exp()))
            .collect();
        self.push(self.shape(a).to_vec(), value, Op::Sigmoid(a.0), &[a.0])
    }

    /// `x` if `x >= 0`, else `slope[c] * x`; `slope` has one entry per channel
    /// (or a single shared entry).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let (outer, channels, inner) = channel_layout(self.shape(x));
        let ns = self.value(slope).len();
        if ns != 1 && ns != channels {
            return Err(Error::dim("prelu", self.shape(x), self.shape(slope)));
        }
        let xs = self.value(x);
        let ss = self.value(slope);
        let mut value = Vec::with_capacity(xs.len());
        for o in 0..outer {
            for c in 0..channels {
                let a = ss[if ns == 1 { 0 } else { c }];
                let base = (o * channels + c) * inner;
                value.extend(xs[base..base + inner].iter().map(|&v| if v >= T::zero() { v } else { a * v }));
            }
        }
        Ok(self.push(self.shape(x).to_vec(), value, Op::Prelu { x: x.0, slope: slope.0 }, &[x.0, slope.0]))
    }

    /// Global layer normalisation: statistics over all channels and positions
    /// of each batch item, then a per-channel affine map.
    pub fn global_layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return Err(Error::Config(format!("GLN eps must be positive, got {eps}")));
        }
        let (outer, channels, inner) = channel_layout(self.shape(x));
        if self.value(gain).len() != channels || self.value(bias).len() != channels {
            return Err(Error::dim("global_layer_norm", self.shape(x), self.shape(gain)));
        }
        let xs = self.value(x);
        let (gs, bs) = (self.value(gain), self.value(bias));
        let m = channels * inner;
        let count = T::from_usize(m).unwrap_or_else(T::one);
        let mut value = vec![T::zero(); xs.len()];
        let mut stats = Vec::with_capacity(outer);
        for o in 0..outer {
            let seg = &xs[o * m..(o + 1) * m];
            let mean = seg.iter().copied().sum::<T>() / count;
            let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let inv = T::one() / (var + eps).sqrt();
            for c in 0..channels {
                for i in 0..inner {
                    let idx = o * m + c * inner + i;
                    value[idx] = gs[c] * (xs[idx] - mean) * inv + bs[c];
                }
            }
            stats.push((mean, inv));
        }
        let op = Op::Gln {
            x: x.0,
            gain: gain.0,
            bias: bias.0,
            stats,
        };
        Ok(self.push(self.shape(x).to_vec(), value, op, &[x.0, gain.0, bias.0]))
    }

    // ---- convolutions ---------------------------------------------------

    /// 1-D cross-correlation. `x` is `[B, C_in, L]` (or `[C_in, L]`), `w` is
    /// `[C_out, C_in / groups, k]`. `groups` must be 1 or `C_in` (depth-wise).
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize, groups: usize) -> Result<Var> {
        let (batch, c_in, len_in) = conv_input("conv1d", self.shape(x))?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 3 || stride == 0 || groups == 0 {
            return Err(Error::dim("conv1d", self.shape(x), &ws));
        }
        let (c_out, per_group, kernel) = (ws[0], ws[1], ws[2]);
        let depthwise = groups > 1;
        let valid = if depthwise {
            groups == c_in && c_out == c_in && per_group == 1
        } else {
            per_group == c_in
        };
        if !valid || len_in + 2 * pad < kernel {
            return Err(Error::dim("conv1d", self.shape(x), &ws));
        }
        if let Some(b) = bias {
            if self.value(b).len() != c_out {
                return Err(Error::dim("conv1d", &ws, self.shape(b)));
            }
        }
        let len_out = (len_in + 2 * pad - kernel) / stride + 1;
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel,
            stride,
            pad,
        };
        let mut value = vec![T::zero(); batch * c_out * len_out];
        let bias_vals = bias.map(|b| self.value(b));
        if depthwise {
            kernels::depthwise1d_forward(self.value(x), self.value(w), bias_vals, &dims, &mut value);
        } else {
            kernels::conv1d_forward(self.value(x), self.value(w), bias_vals, &dims, &mut value);
        }
        let shape = conv_output_shape(self.shape(x).len(), batch, c_out, len_out);
        let mut inputs = vec![x.0, w.0];
        inputs.extend(bias.map(|b| b.0));
        let op = Op::Conv1d {
            x: x.0,
            w: w.0,
            b: bias.map(|b| b.0),
            dims,
            depthwise,
        };
        Ok(self.push(shape, value, op, &inputs))
    }

    /// Transposed 1-D convolution without bias; `w` is `[C_in, C_out, k]`.
    /// Output length is `(L - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (batch, c_in, len_in) = conv_input("conv_transpose1d", self.shape(x))?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 3 || ws[0] != c_in || stride == 0 {
            return Err(Error::dim("conv_transpose1d", self.shape(x), &ws));
        }
        let (c_out, kernel) = (ws[1], ws[2]);
        let full = (len_in - 1) * stride + kernel;
        if full <= 2 * pad {
            return Err(Error::dim("conv_transpose1d", self.shape(x), &ws));
        }
        let len_out = full - 2 * pad;
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel,
            stride,
            pad,
        };
        let mut value = vec![T::zero(); batch * c_out * len_out];
        kernels::conv_transpose1d_forward(self.value(x), self.value(w), &dims, &mut value);
        let shape = conv_output_shape(self.shape(x).len(), batch, c_out, len_out);
        Ok(self.push(shape, value, Op::ConvTranspose1d { x: x.0, w: w.0, dims }, &[x.0, w.0]))
    }

    /// Depth-wise 2-D convolution with stride 1 and same-size output.
    /// `x` is `[B, C, H, W]`, `w` is `[C, kh, kw]` (odd sizes), `bias` is `[C]`.
    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 3 || ws[0] != xs[1] || ws[1].is_multiple_of(2) || ws[2].is_multiple_of(2) {
            return Err(Error::dim("depthwise_conv2d", &xs, &ws));
        }
        if self.value(bias).len() != xs[1] {
            return Err(Error::dim("depthwise_conv2d", &xs, self.shape(bias)));
        }
        let dims = Dw2dDims {
            batch: xs[0],
            channels: xs[1],
            h: xs[2],
            w: xs[3],
            kh: ws[1],
            kw: ws[2],
        };
        let mut value = vec![T::zero(); numel(&xs)];
        kernels::depthwise2d_forward(self.value(x), self.value(w), self.value(bias), &dims, &mut value);
        let op = Op::Depthwise2d {
            x: x.0,
            w: w.0,
            b: bias.0,
            dims,
        };
        Ok(self.push(xs, value, op, &[x.0, w.0, bias.0]))
    }

    // ---- dense layers ---------------------------------------------------

    /// `y = x W^T + b` over the last dimension; `w` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.is_empty() || ws.len() != 2 || ws[1] != xs[xs.len() - 1] {
            return Err(Error::dim("linear", &xs, &ws));
        }
        let (fan_out, fan_in) = (ws[0], ws[1]);
        if let Some(b) = bias {
            if self.value(b).len() != fan_out {
                return Err(Error::dim("linear", &ws, self.shape(b)));
            }
        }
        let rows = numel(&xs) / fan_in;
        let mut value = vec![T::zero(); rows * fan_out];
        gemm(
            rows,
            fan_in,
            fan_out,
            self.value(x),
            Layout::rows(fan_in),
            self.value(w),
            Layout::transposed(fan_in),
            &mut value,
            Layout::rows(fan_out),
            false,
        );
        if let Some(b) = bias {
            let bv = self.value(b);
            for row in value.chunks_mut(fan_out) {
                for (v, &bb) in row.iter_mut().zip(bv) {
                    *v = *v + bb;
                }
            }
        }
        let mut shape = xs.clone();
        *shape.last_mut().expect("non-empty") = fan_out;
        let mut inputs = vec![x.0, w.0];
        inputs.extend(bias.map(|b| b.0));
        let op = Op::Linear {
            x: x.0,
            w: w.0,
            b: bias.map(|b| b.0),
            rows,
            fan_in,
            fan_out,
        };
        Ok(self.push(shape, value, op, &inputs))
    }

    /// Matrix product of a 2-D pair.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let a3 = self.reshape(a, &[1, sa[0], sa[1]])?;
        let b3 = self.reshape(b, &[1, sb[0], sb[1]])?;
        let y = self.bmm(a3, b3, false)?;
        self.reshape(y, &[sa[0], sb[1]])
    }

    /// Batched product `[Bt, m, k] x [Bt, k, n]`, or `[Bt, m, k] x [Bt, n, k]^T`
    /// when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::dim("bmm", &sa, &sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(Error::dim("bmm", &sa, &sb));
        }
        let mut value = vec![T::zero(); batch * m * n];
        let lb = if trans_b { Layout::transposed(k) } else { Layout::rows(n) };
        for t in 0..batch {
            gemm(
                m,
                k,
                n,
                &self.value(a)[t * m * k..(t + 1) * m * k],
                Layout::rows(k),
                &self.value(b)[t * k * n..(t + 1) * k * n],
                lb,
                &mut value[t * m * n..(t + 1) * m * n],
                Layout::rows(n),
                false,
            );
        }
        let op = Op::Bmm {
            a: a.0,
            b: b.0,
            trans_b,
            batch,
            m,
            k,
            n,
        };
        Ok(self.push(vec![batch, m, n], value, op, &[a.0, b.0]))
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, x: Var) -> Var {
        let last = *self.shape(x).last().unwrap_or(&1);
        let mut value = self.value(x).to_vec();
        for row in value.chunks_mut(last) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s = s + *v;
            }
            for v in row.iter_mut() {
                *v = *v / s;
            }
        }
        self.push(self.shape(x).to_vec(), value, Op::Softmax(x.0), &[x.0])
    }

    // ---- layout ---------------------------------------------------------

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim("permute", &shape, perm));
        }
        let mut value = vec![T::zero(); self.value(x).len()];
        kernels::permute_copy(self.value(x), &shape, perm, &mut value);
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        Ok(self.push(out_shape, value, Op::Permute { x: x.0, perm: perm.to_vec() }, &[x.0]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).len() {
            return Err(Error::dim("reshape", self.shape(x), shape));
        }
        let value = self.value(x).to_vec();
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x.0), &[x.0]))
    }

    /// Contiguous sub-range `[start, start + len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::dim("slice", &shape, &[axis, start, len]));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let axis_len = shape[axis];
        let src = self.value(x);
        let mut value = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            value.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let op = Op::Slice {
            x: x.0,
            outer,
            axis_len,
            start,
            len,
            inner,
        };
        Ok(self.push(out_shape, value, op, &[x.0]))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = match xs.first() {
            Some(&v) => self.shape(v).to_vec(),
            None => return Err(Error::Contract("concat of zero tensors".into())),
        };
        if axis >= first.len() {
            return Err(Error::dim("concat", &first, &[axis]));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            if s.len() != first.len() || s.iter().zip(&first).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return Err(Error::dim("concat", &first, s));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut value = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis] * inner;
                value.extend_from_slice(&self.value(v)[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let parts: Vec<(usize, usize)> = xs.iter().map(|&v| (v.0, self.shape(v)[axis])).collect();
        let inputs: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.push(shape, value, Op::Concat { xs: parts, outer, inner }, &inputs))
    }

    /// Selects rows (entries of the first dimension) in the given order.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || rows.is_empty() || rows.iter().any(|&r| r >= shape[0]) {
            return Err(Error::dim("gather_rows", &shape, rows));
        }
        let row_len: usize = shape[1..].iter().product();
        let src = self.value(x);
        let mut value = Vec::with_capacity(rows.len() * row_len);
        for &r in rows {
            value.extend_from_slice(&src[r * row_len..(r + 1) * row_len]);
        }
        let mut out = shape.clone();
        out[0] = rows.len();
        let op = Op::GatherRows {
            x: x.0,
            rows: rows.to_vec(),
            row_len,
        };
        Ok(self.push(out, value, op, &[x.0]))
    }

    // ---- resampling -----------------------------------------------------

    /// Adaptive average pooling of the last dimension to `len_out`.
    pub fn adaptive_avg_pool1d(&mut self, x: Var, len_out: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let len_in = *shape.last().unwrap_or(&0);
        if len_out == 0 || len_out > len_in {
            return Err(Error::dim("adaptive_avg_pool1d", &shape, &[len_out]));
        }
        let mut value = Vec::with_capacity(numel(&shape) / len_in * len_out);
        for row in self.value(x).chunks(len_in) {
            for i in 0..len_out {
                let (s, e) = kernels::pool_window(i, len_in, len_out);
                let n = T::from_usize(e - s).unwrap_or_else(T::one);
                value.push(row[s..e].iter().copied().sum::<T>() / n);
            }
        }
        let mut out = shape.clone();
        *out.last_mut().expect("non-empty") = len_out;
        Ok(self.push(out, value, Op::AvgPool { x: x.0, len_in, len_out }, &[x.0]))
    }

    /// Average over the full last dimension (output length 1).
    pub fn global_avg_pool1d(&mut self, x: Var) -> Result<Var> {
        self.adaptive_avg_pool1d(x, 1)
    }

    /// Nearest-neighbour resampling of the last dimension to `len_out`.
    pub fn interpolate_nearest(&mut self, x: Var, len_out: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let len_in = *shape.last().unwrap_or(&0);
        if len_out == 0 || len_in == 0 {
            return Err(Error::dim("interpolate_nearest", &shape, &[len_out]));
        }
        let mut value = Vec::with_capacity(numel(&shape) / len_in * len_out);
        for row in self.value(x).chunks(len_in) {
            value.extend((0..len_out).map(|i| row[kernels::nearest_source(i, len_in, len_out)]));
        }
        let mut out = shape.clone();
        *out.last_mut().expect("non-empty") = len_out;
        Ok(self.push(out, value, Op::Nearest { x: x.0, len_in, len_out }, &[x.0]))
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; identity in
    /// evaluation mode.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability must be in [0, 1), got {p}")));
        }
        if !self.training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let value = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        Ok(self.push(self.shape(x).to_vec(), value, Op::Dropout { x: x.0, mask }, &[x.0]))
    }

    // ---- sequence segmentation -----------------------------------------

    /// Splits the last dimension of `[.., L]` into `count` windows of `size`
    /// with hop `stride`, zero-padding past `L`. Output is `[.., size, count]`.
    pub fn windows(&mut self, x: Var, size: usize, stride: usize, count: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let len = *shape.last().unwrap_or(&0);
        if size == 0 || stride == 0 || count == 0 || len == 0 {
            return Err(Error::dim("windows", &shape, &[size, stride, count]));
        }
        let rows = numel(&shape) / len;
        let src = self.value(x);
        let mut value = vec![T::zero(); rows * size * count];
        for r in 0..rows {
            for k in 0..size {
                for t in 0..count {
                    let p = t * stride + k;
                    if p < len {
                        value[(r * size + k) * count + t] = src[r * len + p];
                    }
                }
            }
        }
        let mut out = shape[..shape.len() - 1].to_vec();
        out.extend([size, count]);
        let op = Op::Windows {
            x: x.0,
            rows,
            len,
            size,
            stride,
            count,
        };
        Ok(self.push(out, value, op, &[x.0]))
    }

    /// Inverse of [`Graph::windows`]: sums windows at their offsets, divides
    /// each position by its coverage count and trims to `len`.
    pub fn overlap_add(&mut self, x: Var, stride: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || stride == 0 || len == 0 {
            return Err(Error::dim("overlap_add", &shape, &[stride, len]));
        }
        let (size, count) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        if (count - 1) * stride + size < len {
            return Err(Error::Invariant(format!(
                "{count} windows of size {size} with stride {stride} do not cover length {len}"
            )));
        }
        let coverage = coverage_counts(size, stride, count, len);
        let rows = numel(&shape) / (size * count);
        let src = self.value(x);
        let mut value = vec![T::zero(); rows * len];
        for r in 0..rows {
            for k in 0..size {
                for t in 0..count {
                    let p = t * stride + k;
                    if p < len {
                        value[r * len + p] = value[r * len + p] + src[(r * size + k) * count + t];
                    }
                }
            }
            for p in 0..len {
                value[r * len + p] = value[r * len + p] / T::from_usize(coverage[p]).unwrap_or_else(T::one);
            }
        }
        let mut out = shape[..shape.len() - 2].to_vec();
        out.push(len);
        let op = Op::OverlapAdd {
            x: x.0,
            rows,
            len,
            size,
            stride,
            count,
        };
        Ok(self.push(out, value, op, &[x.0]))
    }

    // ---- losses ---------------------------------------------------------

    /// Row-wise SI-SNR in dB between `est` and `reference` (`[R, L]` or
    /// `[L]`), returning `[R]`.
    pub fn si_snr(&mut self, est: Var, reference: Var) -> Result<Var> {
        same_shape("si_snr", self.shape(est), self.shape(reference))?;
        let row_len = *self.shape(est).last().unwrap_or(&0);
        if row_len < 2 {
            return Err(Error::dim("si_snr", self.shape(est), &[2]));
        }
        let mut value = Vec::new();
        for (e, r) in self.value(est).chunks(row_len).zip(self.value(reference).chunks(row_len)) {
            let e: Vec<f64> = e.iter().map(|v| v.as_f64()).collect();
            let r: Vec<f64> = r.iter().map(|v| v.as_f64()).collect();
            value.push(T::from_f64_lossy(si_snr_with_grad(&e, &r, false)?.0));
        }
        let n = value.len();
        let op = Op::SiSnr {
            est: est.0,
            reference: reference.0,
            row_len,
        };
        Ok(self.push(vec![n], value, op, &[est.0, reference.0]))
    }

    // ---- reverse pass ---------------------------------------------------

    /// Reverse-mode sweep from the scalar `loss`.
    ///
    /// Every trainable leaf gets a gradient; leaves the loss does not depend
    /// on receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            if let Some(g) = grads[i].take() {
                self.backprop(i, &g, &mut grads);
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![T::zero(); node.value.len()]);
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| axpy(ga, g, T::one()));
                self.accumulate(grads, *b, |gb| axpy(gb, g, T::one()));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| axpy(ga, g, T::one()));
                self.accumulate(grads, *b, |gb| axpy(gb, g, -T::one()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                self.accumulate(grads, *a, |ga| {
                    for ((o, &gi), &y) in ga.iter_mut().zip(g).zip(vb) {
                        *o = *o + gi * y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, &gi), &x) in gb.iter_mut().zip(g).zip(va) {
                        *o = *o + gi * x;
                    }
                });
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |ga| axpy(ga, g, *c)),
            Op::Sum(a) => self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|o| *o = *o + g[0])),
            Op::Mean(a) => {
                let n = T::from_usize(self.nodes[*a].value.len()).unwrap_or_else(T::one);
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|o| *o = *o + g[0] / n))
            }
            Op::Relu(a) => {
                let va = &self.nodes[*a].value;
                self.accumulate(grads, *a, |ga| {
                    for ((o, &gi), &x) in ga.iter_mut().zip(g).zip(va) {
                        if x > T::zero() {
                            *o = *o + gi;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                self.accumulate(grads, *a, |ga| {
                    for ((o, &gi), &s) in ga.iter_mut().zip(g).zip(y) {
                        *o = *o + gi * s * (T::one() - s);
                    }
                });
            }
            Op::Prelu { x, slope } => self.backprop_prelu(*x, *slope, g, grads),
            Op::Gln { x, gain, bias, stats } => self.backprop_gln(*x, *gain, *bias, stats, g, grads),
            Op::Conv1d { x, w, b, dims, depthwise } => {
                let (vx, vw) = (&self.nodes[*x].value, &self.nodes[*w].value);
                let mut gw = self.nodes[*w].requires_grad.then(|| vec![T::zero(); vw.len()]);
                let mut gb = b.filter(|&b| self.nodes[b].requires_grad).map(|b| vec![T::zero(); self.nodes[b].value.len()]);
                let gx = self.grad_slot(grads, *x);
                if *depthwise {
                    kernels::depthwise1d_backward(vx, vw, g, dims, gx, gw.as_deref_mut(), gb.as_deref_mut());
                } else {
                    kernels::conv1d_backward(vx, vw, g, dims, gx, gw.as_deref_mut(), gb.as_deref_mut());
                }
                if let Some(gw) = gw {
                    self.accumulate(grads, *w, |o| axpy(o, &gw, T::one()));
                }
                if let (Some(b), Some(gb)) = (b, gb) {
                    self.accumulate(grads, *b, |o| axpy(o, &gb, T::one()));
                }
            }
            Op::ConvTranspose1d { x, w, dims } => {
                let (vx, vw) = (&self.nodes[*x].value, &self.nodes[*w].value);
                let mut gw = self.nodes[*w].requires_grad.then(|| vec![T::zero(); vw.len()]);
                let gx = self.grad_slot(grads, *x);
                kernels::conv_transpose1d_backward(vx, vw, g, dims, gx, gw.as_deref_mut());
                if let Some(gw) = gw {
                    self.accumulate(grads, *w, |o| axpy(o, &gw, T::one()));
                }
            }
            Op::Depthwise2d { x, w, b, dims } => {
                let (vx, vw) = (&self.nodes[*x].value, &self.nodes[*w].value);
                let mut gw = self.nodes[*w].requires_grad.then(|| vec![T::zero(); vw.len()]);
                let mut gb = self.nodes[*b].requires_grad.then(|| vec![T::zero(); dims.channels]);
                let gx = self.grad_slot(grads, *x);
                kernels::depthwise2d_backward(vx, vw, g, dims, gx, gw.as_deref_mut(), gb.as_deref_mut());
                if let Some(gw) = gw {
                    self.accumulate(grads, *w, |o| axpy(o, &gw, T::one()));
                }
                if let Some(gb) = gb {
                    self.accumulate(grads, *b, |o| axpy(o, &gb, T::one()));
                }
            }
            Op::Linear { x, w, b, rows, fan_in, fan_out } => {
                let (rows, fan_in, fan_out) = (*rows, *fan_in, *fan_out);
                let (vx, vw) = (&self.nodes[*x].value, &self.nodes[*w].value);
                self.accumulate(grads, *x, |gx| {
                    gemm(rows, fan_out, fan_in, g, Layout::rows(fan_out), vw, Layout::rows(fan_in), gx, Layout::rows(fan_in), true)
                });
                self.accumulate(grads, *w, |gw| {
                    gemm(fan_out, rows, fan_in, g, Layout::transposed(fan_out), vx, Layout::rows(fan_in), gw, Layout::rows(fan_in), true)
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, |gb| {
                        for row in g.chunks(fan_out) {
                            axpy(gb, row, T::one());
                        }
                    });
                }
            }
            Op::Bmm { a, b, trans_b, batch, m, k, n } => {
                let (batch, m, k, n) = (*batch, *m, *k, *n);
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                self.accumulate(grads, *a, |ga| {
                    // da = g * b^T  (b stored k x n)   or   g * b (b stored n x k)
                    let lb = if *trans_b { Layout::rows(k) } else { Layout::transposed(n) };
                    for t in 0..batch {
                        gemm(m, n, k, &g[t * m * n..(t + 1) * m * n], Layout::rows(n), &vb[t * k * n..(t + 1) * k * n], lb, &mut ga[t * m * k..(t + 1) * m * k], Layout::rows(k), true);
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for t in 0..batch {
                        let gt = &g[t * m * n..(t + 1) * m * n];
                        let at = &va[t * m * k..(t + 1) * m * k];
                        let out = &mut gb[t * k * n..(t + 1) * k * n];
                        if *trans_b {
                            // db (n x k) = g^T (n x m) * a (m x k)
                            gemm(n, m, k, gt, Layout::transposed(n), at, Layout::rows(k), out, Layout::rows(k), true);
                        } else {
                            // db (k x n) = a^T (k x m) * g (m x n)
                            gemm(k, m, n, at, Layout::transposed(k), gt, Layout::rows(n), out, Layout::rows(n), true);
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let last = *node.shape.last().unwrap_or(&1);
                self.accumulate(grads, *a, |ga| {
                    for ((o, gr), yr) in ga.chunks_mut(last).zip(g.chunks(last)).zip(y.chunks(last)) {
                        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for ((o, &gi), &yi) in o.iter_mut().zip(gr).zip(yr) {
                            *o = *o + yi * (gi - dot);
                        }
                    }
                });
            }
            Op::Permute { x, perm } => {
                let inv = kernels::inverse_permutation(perm);
                let mut tmp = vec![T::zero(); g.len()];
                kernels::permute_copy(g, &node.shape, &inv, &mut tmp);
                self.accumulate(grads, *x, |gx| axpy(gx, &tmp, T::one()));
            }
            Op::Reshape(x) => self.accumulate(grads, *x, |gx| axpy(gx, g, T::one())),
            Op::AvgPool { x, len_in, len_out } => {
                let (len_in, len_out) = (*len_in, *len_out);
                self.accumulate(grads, *x, |gx| {
                    for (gxr, gr) in gx.chunks_mut(len_in).zip(g.chunks(len_out)) {
                        for (i, &gi) in gr.iter().enumerate() {
                            let (s, e) = kernels::pool_window(i, len_in, len_out);
                            let share = gi / T::from_usize(e - s).unwrap_or_else(T::one);
                            for v in &mut gxr[s..e] {
                                *v = *v + share;
                            }
                        }
                    }
                });
            }
            Op::Nearest { x, len_in, len_out } => {
                let (len_in, len_out) = (*len_in, *len_out);
                self.accumulate(grads, *x, |gx| {
                    for (gxr, gr) in gx.chunks_mut(len_in).zip(g.chunks(len_out)) {
                        for (i, &gi) in gr.iter().enumerate() {
                            let s = kernels::nearest_source(i, len_in, len_out);
                            gxr[s] = gxr[s] + gi;
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => self.accumulate(grads, *x, |gx| {
                for ((o, &gi), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *o = *o + gi * m;
                }
            }),
            Op::Slice { x, outer, axis_len, start, len, inner } => {
                let (outer, axis_len, start, len, inner) = (*outer, *axis_len, *start, *len, *inner);
                self.accumulate(grads, *x, |gx| {
                    for o in 0..outer {
                        let dst = (o * axis_len + start) * inner;
                        axpy(&mut gx[dst..dst + len * inner], &g[o * len * inner..(o + 1) * len * inner], T::one());
                    }
                });
            }
            Op::Concat { xs, outer, inner } => {
                let total: usize = xs.iter().map(|&(_, n)| n).sum();
                let mut offset = 0;
                for &(x, n) in xs {
                    self.accumulate(grads, x, |gx| {
                        for o in 0..*outer {
                            let src = (o * total + offset) * inner;
                            axpy(&mut gx[o * n * inner..(o + 1) * n * inner], &g[src..src + n * inner], T::one());
                        }
                    });
                    offset += n;
                }
            }
            Op::GatherRows { x, rows, row_len } => self.accumulate(grads, *x, |gx| {
                for (j, &r) in rows.iter().enumerate() {
                    axpy(&mut gx[r * row_len..(r + 1) * row_len], &g[j * row_len..(j + 1) * row_len], T::one());
                }
            }),
            Op::Windows { x, rows, len, size, stride, count } => {
                let (rows, len, size, stride, count) = (*rows, *len, *size, *stride, *count);
                self.accumulate(grads, *x, |gx| {
                    for r in 0..rows {
                        for k in 0..size {
                            for t in 0..count {
                                let p = t * stride + k;
                                if p < len {
                                    gx[r * len + p] = gx[r * len + p] + g[(r * size + k) * count + t];
                                }
                            }
                        }
                    }
                });
            }
            Op::OverlapAdd { x, rows, len, size, stride, count } => {
                let (rows, len, size, stride, count) = (*rows, *len, *size, *stride, *count);
                let coverage = coverage_counts(size, stride, count, len);
                self.accumulate(grads, *x, |gx| {
                    for r in 0..rows {
                        for k in 0..size {
                            for t in 0..count {
                                let p = t * stride + k;
                                if p < len {
                                    let idx = (r * size + k) * count + t;
                                    gx[idx] = gx[idx] + g[r * len + p] / T::from_usize(coverage[p]).unwrap_or_else(T::one);
                                }
                            }
                        }
                    }
                });
            }
            Op::SiSnr { est, reference, row_len } => {
                let (ve, vr) = (&self.nodes[*est].value, &self.nodes[*reference].value);
                // SI-SNR is a function of the squared cosine between the
                // centred rows, so it is symmetric in its arguments and the
                // reference gradient is the estimate formula with them swapped
                for (target, swap) in [(*est, false), (*reference, true)] {
                    self.accumulate(grads, target, |out| {
                        for (row, ((e, r), o)) in ve.chunks(*row_len).zip(vr.chunks(*row_len)).zip(out.chunks_mut(*row_len)).enumerate() {
                            let e: Vec<f64> = e.iter().map(|v| v.as_f64()).collect();
                            let r: Vec<f64> = r.iter().map(|v| v.as_f64()).collect();
                            let (a, b) = if swap { (&r, &e) } else { (&e, &r) };
                            // forward already validated these rows; a failure
                            // here means a zero-power estimate, where the
                            // value is clamped and the gradient is zero
                            if let Ok((_, Some(d))) = si_snr_with_grad(a, b, true) {
                                let gi = g[row].as_f64();
                                for (o, dv) in o.iter_mut().zip(d) {
                                    *o = *o + T::from_f64_lossy(gi * dv);
                                }
                            }
                        }
                    });
                }
            }
        }
    }

    fn backprop_prelu(&self, x: usize, slope: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (outer, channels, inner) = channel_layout(&self.nodes[x].shape);
        let vx = &self.nodes[x].value;
        let vs = &self.nodes[slope].value;
        let shared = vs.len() == 1;
        self.accumulate(grads, x, |gx| {
            for o in 0..outer {
                for c in 0..channels {
                    let a = vs[if shared { 0 } else { c }];
                    let base = (o * channels + c) * inner;
                    for i in base..base + inner {
                        gx[i] = gx[i] + if vx[i] >= T::zero() { g[i] } else { a * g[i] };
                    }
                }
            }
        });
        self.accumulate(grads, slope, |gs| {
            for o in 0..outer {
                for c in 0..channels {
                    let base = (o * channels + c) * inner;
                    let s: T = (base..base + inner).filter(|&i| vx[i] < T::zero()).map(|i| g[i] * vx[i]).sum();
                    let slot = if shared { 0 } else { c };
                    gs[slot] = gs[slot] + s;
                }
            }
        });
    }

    fn backprop_gln(&self, x: usize, gain: usize, bias: usize, stats: &[(T, T)], g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (outer, channels, inner) = channel_layout(&self.nodes[x].shape);
        let vx = &self.nodes[x].value;
        let vg = &self.nodes[gain].value;
        let m = channels * inner;
        let count = T::from_usize(m).unwrap_or_else(T::one);
        let xhat = |o: usize, idx: usize| (vx[idx] - stats[o].0) * stats[o].1;
        self.accumulate(grads, gain, |gg| {
            for o in 0..outer {
                for c in 0..channels {
                    let base = o * m + c * inner;
                    gg[c] = gg[c] + (base..base + inner).map(|i| g[i] * xhat(o, i)).sum::<T>();
                }
            }
        });
        self.accumulate(grads, bias, |gb| {
            for o in 0..outer {
                for c in 0..channels {
                    let base = o * m + c * inner;
                    gb[c] = gb[c] + g[base..base + inner].iter().copied().sum::<T>();
                }
            }
        });
        self.accumulate(grads, x, |gx| {
            for o in 0..outer {
                let mut sum_d = T::zero();
                let mut sum_dx = T::zero();
                for c in 0..channels {
                    for i in o * m + c * inner..o * m + (c + 1) * inner {
                        let d = g[i] * vg[c];
                        sum_d = sum_d + d;
                        sum_dx = sum_dx + d * xhat(o, i);
                    }
                }
                let (mean_d, mean_dx) = (sum_d / count, sum_dx / count);
                for c in 0..channels {
                    for i in o * m + c * inner..o * m + (c + 1) * inner {
                        let d = g[i] * vg[c];
                        gx[i] = gx[i] + stats[o].1 * (d - mean_d - xhat(o, i) * mean_dx);
                    }
                }
            }
        });
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], i: usize, f: impl FnOnce(&mut [T])) {
        if let Some(slot) = self.grad_slot(grads, i) {
            f(slot);
        }
    }

    fn grad_slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], i: usize) -> Option<&'a mut [T]> {
        let node = &self.nodes[i];
        if !node.requires_grad {
            return None;
        }
        Some(grads[i].get_or_insert_with(|| vec![T::zero(); node.value.len()]).as_mut_slice())
    }
}

fn axpy<T: Real>(dst: &mut [T], src: &[T], a: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + a * s;
    }
}

fn coverage_counts(size: usize, stride: usize, count: usize, len: usize) -> Vec<usize> {
    let mut cov = vec![0usize; len];
    for t in 0..count {
        for k in 0..size {
            let p = t * stride + k;
            if p < len {
                cov[p] += 1;
            }
        }
    }
    cov
}
