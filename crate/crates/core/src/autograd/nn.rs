//! Composite layers built from graph primitives.

use alloc::vec::Vec;

use num_traits::Float;

use super::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

/// Sinusoidal position table `[len, dim]`: even columns `sin`, odd columns
/// `cos`, with wavelengths geometric from `2 pi` to `10000 * 2 pi`.
pub fn sinusoidal_positions<T: Real>(len: usize, dim: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * dim);
    for pos in 0..len {
        for j in 0..dim {
            let pair = (j / 2 * 2) as f64;
            let angle = pos as f64 / Float::powf(10_000.0f64, pair / dim as f64);
            data.push(T::from_f64_lossy(if j % 2 == 0 { Float::sin(angle) } else { Float::cos(angle) }));
        }
    }
    Tensor::new(&[len, dim], data).expect("position table dimensions are positive")
}

/// Projection weights of one multi-head attention layer. Weights are stored
/// `[out, in]`: `q`, `k`, `v` are `[d_model, d_in]` and `o` is `[d_in, d_model]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product attention with `heads` heads over `x: [B, L, d_in]`.
///
/// Returns the output `[B, L, d_in]` and the attention probabilities
/// `[B * heads, L, L]`.
pub fn multi_head_attention<T: Real>(g: &mut Graph<T>, x: Var, w: &AttentionVars, heads: usize) -> Result<(Var, Var)> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("multi_head_attention", &shape, &[0, 0, 0]));
    }
    let (batch, len) = (shape[0], shape[1]);
    let d_model = g.shape(w.wq)[0];
    if heads == 0 || !d_model.is_multiple_of(heads) {
        return Err(Error::Config(alloc::format!(
            "d_model {d_model} is not divisible by {heads} heads"
        )));
    }
    let dh = d_model / heads;
    let split = |g: &mut Graph<T>, v: Var| -> Result<Var> {
        let v = g.reshape(v, &[batch, len, heads, dh])?;
        let v = g.permute(v, &[0, 2, 1, 3])?;
        g.reshape(v, &[batch * heads, len, dh])
    };
    let q = g.linear(x, w.wq, Some(w.bq))?;
    let k = g.linear(x, w.wk, Some(w.bk))?;
    let v = g.linear(x, w.wv, Some(w.bv))?;
    let (q, k, v) = (split(g, q)?, split(g, k)?, split(g, v)?);
    let scores = g.bmm(q, k, true)?;
    let scores = g.scale(scores, T::from_f64_lossy(1.0 / Float::sqrt(dh as f64)));
    let attn = g.softmax(scores);
    let ctx = g.bmm(attn, v, false)?;
    let ctx = g.reshape(ctx, &[batch, heads, len, dh])?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[batch, len, d_model])?;
    let out = g.linear(ctx, w.wo, Some(w.bo))?;
    Ok((out, attn))
}
