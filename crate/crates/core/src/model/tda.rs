//! Top-down attention module.
//!
//! Bottom-up, `S` strided depth-wise convolutions halve the sequence each
//! time. Every scale is average-pooled to the coarsest length and summed into
//! a global summary `G`, which a transformer layer (global attention, GA)
//! refines into `G^`. `G^` is interpolated back to every scale and multiplied
//! in. Top-down, local attention (LA) layers restore resolution one scale at
//! a time: the upsampled coarser result produces a sigmoid gate `rho` and an
//! additive term `b`, and the finer scale becomes `rho * finer + b`.

use alloc::format;
use alloc::vec::Vec;

use super::config::{RssNetConfig, GLN_EPS};
use super::params::BoundParams;
use crate::autograd::nn::{multi_head_attention, sinusoidal_positions, AttentionVars};
use crate::autograd::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

/// Intermediate results kept for inspection and tests.
#[derive(Debug, Clone)]
pub struct TdaTrace {
    pub output: Var,
    /// Attention probabilities of the GA layer, `[B * heads, Lc, Lc]`.
    pub attention: Var,
}

fn pointwise<T: Real>(g: &mut Graph<T>, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    g.conv1d(x, w, Some(b), 1, 0, 1)
}

fn linear<T: Real>(g: &mut Graph<T>, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    g.linear(x, w, Some(b))
}

/// Global attention over `[B, N, Lc]`: in-projection plus positions,
/// residual MHA, residual ReLU feed-forward, out-projection.
fn global_attention<T: Real>(g: &mut Graph<T>, p: &BoundParams, prefix: &str, c: &RssNetConfig, x: Var) -> Result<(Var, Var)> {
    let shape = g.shape(x).to_vec();
    let (batch, len) = (shape[0], shape[2]);
    let z = g.permute(x, &[0, 2, 1])?;
    let z = linear(g, p, &format!("{prefix}.in_proj"), z)?;
    let pos: Tensor<T> = sinusoidal_positions(len, c.d_model);
    let tiled: Vec<T> = pos.data().iter().copied().cycle().take(batch * pos.len()).collect();
    let pos = g.constant(Tensor::new(&[batch, len, c.d_model], tiled)?);
    let z = g.add(z, pos)?;
    let m = |s: &str| p.get(&format!("{prefix}.mha.{s}"));
    let att = AttentionVars {
        wq: m("q.weight")?,
        bq: m("q.bias")?,
        wk: m("k.weight")?,
        bk: m("k.bias")?,
        wv: m("v.weight")?,
        bv: m("v.bias")?,
        wo: m("o.weight")?,
        bo: m("o.bias")?,
    };
    let (a, probs) = multi_head_attention(g, z, &att, c.heads)?;
    let a = g.dropout(a, c.dropout)?;
    let z = g.add(z, a)?;
    let f = linear(g, p, &format!("{prefix}.ffn.up"), z)?;
    let f = g.relu(f);
    let f = linear(g, p, &format!("{prefix}.ffn.down"), f)?;
    let f = g.dropout(f, c.dropout)?;
    let z = g.add(z, f)?;
    let out = linear(g, p, &format!("{prefix}.out_proj"), z)?;
    Ok((g.permute(out, &[0, 2, 1])?, probs))
}

/// Applies the TDA module with parameters under `prefix` to `x: [B, N, len]`.
pub fn tda_forward<T: Real>(g: &mut Graph<T>, p: &BoundParams, prefix: &str, c: &RssNetConfig, x: Var) -> Result<TdaTrace> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || shape[1] != c.n {
        return Err(Error::dim("tda_forward", &shape, &[0, c.n, 0]));
    }
    let len = shape[2];
    let min = 1usize << c.depth;
    if len < min {
        return Err(Error::Config(format!(
            "TDA input length {len} is below the minimum {min} for S = {}",
            c.depth
        )));
    }

    let mut scales = Vec::with_capacity(c.depth + 1);
    scales.push(x);
    for s in 0..c.depth {
        let d = format!("{prefix}.down.{s}");
        let prev = *scales.last().expect("non-empty");
        let w = p.get(&format!("{d}.conv.weight"))?;
        let b = p.get(&format!("{d}.conv.bias"))?;
        let y = g.conv1d(prev, w, Some(b), 2, 2, c.n)?;
        let gain = p.get(&format!("{d}.norm.gain"))?;
        let bias = p.get(&format!("{d}.norm.bias"))?;
        let y = g.global_layer_norm(y, gain, bias, T::from_f64_lossy(GLN_EPS))?;
        scales.push(y);
    }
    let lens: Vec<usize> = scales.iter().map(|&v| g.shape(v)[2]).collect();
    let coarse = lens[c.depth];

    let mut summary = None;
    for &s in &scales {
        let pooled = g.adaptive_avg_pool1d(s, coarse)?;
        summary = Some(match summary {
            None => pooled,
            Some(acc) => g.add(acc, pooled)?,
        });
    }
    let summary = summary.expect("at least one scale");
    let (refined, attention) = global_attention(g, p, &format!("{prefix}.ga"), c, summary)?;

    let mut modulated = Vec::with_capacity(scales.len());
    for (&s, &l) in scales.iter().zip(&lens) {
        let up = g.interpolate_nearest(refined, l)?;
        modulated.push(g.mul(s, up)?);
    }

    let mut y = modulated[c.depth];
    for s in (0..c.depth).rev() {
        let up = g.interpolate_nearest(y, lens[s])?;
        let gate = pointwise(g, p, &format!("{prefix}.la.{s}.gate"), up)?;
        let rho = g.sigmoid(gate);
        let b = pointwise(g, p, &format!("{prefix}.la.{s}.shift"), up)?;
        let gated = g.mul(rho, modulated[s])?;
        y = g.add(gated, b)?;
    }
    if g.shape(y) != shape.as_slice() {
        return Err(Error::Invariant(format!(
            "TDA output shape {:?} differs from input {shape:?}",
            g.shape(y)
        )));
    }
    Ok(TdaTrace { output: y, attention })
}
