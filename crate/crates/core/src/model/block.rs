use alloc::format;

use super::config::RssNetConfig;
use super::params::BoundParams;
use super::tda::tda_forward;
use crate::autograd::{Graph, Real, Var};
use crate::{Error, Result};

/// Residual branch of one block half: depth-wise 2-D convolution when the
/// configured path selects it, identity otherwise.
fn residual<T: Real>(g: &mut Graph<T>, p: &BoundParams, prefix: &str, on: bool, h: Var) -> Result<Var> {
    if !on {
        return Ok(h);
    }
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    g.depthwise_conv2d(h, w, b)
}

/// TDA along the last axis of `x: [B, N, A, Z]` after moving `A` next to
/// the batch: the sequences are `[B * A, N, Z]`.
fn along_last<T: Real>(g: &mut Graph<T>, p: &BoundParams, prefix: &str, c: &RssNetConfig, x: Var, to_seq: [usize; 4], from_seq: [usize; 4]) -> Result<Var> {
    let moved = g.permute(x, &to_seq)?;
    let s = g.shape(moved).to_vec();
    let seq = g.reshape(moved, &[s[0] * s[1], s[2], s[3]])?;
    let y = tda_forward(g, p, prefix, c, seq)?.output;
    let y = g.reshape(y, &s)?;
    g.permute(y, &from_seq)
}

/// One dual-path block on `H: [B, N, K, T]`: intra-chunk TDA along `K`,
/// then inter-chunk TDA along `T`, each added to its residual branch.
pub fn rssnet_block<T: Real>(g: &mut Graph<T>, p: &BoundParams, set: usize, c: &RssNetConfig, h: Var) -> Result<Var> {
    let shape = g.shape(h).to_vec();
    let prefix = format!("blocks.{set}");
    // [B, N, K, T] -> [B, T, N, K]: sequences of length K, one per chunk
    let f1 = along_last(g, p, &format!("{prefix}.intra"), c, h, [0, 3, 1, 2], [0, 2, 3, 1])?;
    let r1 = residual(g, p, &format!("{prefix}.path_intra"), c.dwconv_path.on_intra(), h)?;
    let h2 = g.add(f1, r1)?;
    // [B, N, K, T] -> [B, K, N, T]: sequences of length T, one per offset
    let f2 = along_last(g, p, &format!("{prefix}.inter"), c, h2, [0, 2, 1, 3], [0, 2, 1, 3])?;
    let r2 = residual(g, p, &format!("{prefix}.path_inter"), c.dwconv_path.on_inter(), h2)?;
    let out = g.add(f2, r2)?;
    if g.shape(out) != shape.as_slice() {
        return Err(Error::Invariant(format!(
            "block output {:?} differs from input {shape:?}",
            g.shape(out)
        )));
    }
    Ok(out)
}

/// Applies the block `iter` times. Between iterations the block output is
/// added to the block input `H` and mixed by a 1x1 convolution.
pub fn unroll<T: Real>(g: &mut Graph<T>, p: &BoundParams, c: &RssNetConfig, h: Var) -> Result<Var> {
    let shape = g.shape(h).to_vec();
    let mut r = h;
    let mut out = h;
    for i in 0..c.iter {
        let set = if c.weight_sharing { 0 } else { i };
        out = rssnet_block(g, p, set, c, r)?;
        if i + 1 < c.iter {
            let fuse = if c.weight_sharing { 0 } else { i };
            let sum = g.add(out, h)?;
            let flat = g.reshape(sum, &[shape[0], shape[1], shape[2] * shape[3]])?;
            let w = p.get(&format!("separator.fuse.{fuse}.weight"))?;
            let b = p.get(&format!("separator.fuse.{fuse}.bias"))?;
            let mixed = g.conv1d(flat, w, Some(b), 1, 0, 1)?;
            r = g.reshape(mixed, &shape)?;
        }
    }
    Ok(out)
}
