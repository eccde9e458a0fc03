use alloc::vec::Vec;

use super::block::unroll;
use super::config::{ChunkGeometry, RssNetConfig, GLN_EPS};
use super::params::{BoundParams, RssNetParams};
use crate::autograd::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

/// `h = PReLU(GLN(conv1d(y)))` for `y: [B, 1, L]`, giving `[B, N, L']`.
pub fn encode<T: Real>(g: &mut Graph<T>, p: &BoundParams, c: &RssNetConfig, y: Var) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    if shape.len() != 3 || shape[1] != 1 || shape[2] != c.length {
        return Err(Error::dim("encode", &shape, &[shape.first().copied().unwrap_or(1), 1, c.length]));
    }
    let conv = g.conv1d(
        y,
        p.get("encoder.conv.weight")?,
        Some(p.get("encoder.conv.bias")?),
        c.enc_stride,
        c.enc_pad(),
        1,
    )?;
    let norm = g.global_layer_norm(
        conv,
        p.get("encoder.norm.gain")?,
        p.get("encoder.norm.bias")?,
        T::from_f64_lossy(GLN_EPS),
    )?;
    g.prelu(norm, p.get("encoder.act.slope")?)
}

/// Splits `[B, N, L']` into overlapping windows `[B, N, K, T]` with hop
/// `floor(K / 2)`, zero-padding the tail.
pub fn chunk<T: Real>(g: &mut Graph<T>, h: Var, size: usize) -> Result<(Var, ChunkGeometry)> {
    let len = *g.shape(h).last().unwrap_or(&0);
    let geo = ChunkGeometry::new(len, size)?;
    Ok((g.windows(h, geo.size, geo.stride, geo.count)?, geo))
}

/// Exact inverse of [`chunk`].
pub fn overlap_add<T: Real>(g: &mut Graph<T>, chunks: Var, geo: &ChunkGeometry) -> Result<Var> {
    let s = g.shape(chunks);
    if s.len() < 2 || s[s.len() - 2] != geo.size || s[s.len() - 1] != geo.count {
        return Err(Error::Invariant(alloc::format!(
            "chunk tensor {s:?} does not match geometry {geo:?}"
        )));
    }
    g.overlap_add(chunks, geo.stride, geo.len)
}

/// Mask net and decoder: `PReLU`, 1x1 convolution to `C * N` channels,
/// then `s_i = conv_transpose1d(h * M_i)` for each source. Returns `[B, C, L]`.
pub fn mask_and_decode<T: Real>(g: &mut Graph<T>, p: &BoundParams, c: &RssNetConfig, r_hat: Var, h: Var) -> Result<(Var, Var)> {
    let act = g.prelu(r_hat, p.get("mask.act.slope")?)?;
    let masks = g.conv1d(act, p.get("mask.conv.weight")?, Some(p.get("mask.conv.bias")?), 1, 0, 1)?;
    let ms = g.shape(masks).to_vec();
    if ms[1] != c.sources * c.n {
        return Err(Error::Config(alloc::format!(
            "mask net produces {} channels, expected C * N = {}",
            ms[1],
            c.sources * c.n
        )));
    }
    let dec = p.get("decoder.weight")?;
    let mut outs = Vec::with_capacity(c.sources);
    for i in 0..c.sources {
        let m = g.slice(masks, 1, i * c.n, c.n)?;
        let z = g.mul(h, m)?;
        outs.push(g.conv_transpose1d(z, dec, c.enc_stride, c.enc_pad())?);
    }
    Ok((g.concat(&outs, 1)?, masks))
}

/// Graph handles produced by [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// Separated spectra `[B, C, L]`.
    pub estimates: Var,
    /// Encoder output `[B, N, L']`.
    pub encoded: Var,
    /// Mask-net output `[B, C * N, L']`.
    pub masks: Var,
}

/// Full network on a batch of mixtures `y: [B, 1, L]` (or `[B, L]`).
pub fn forward<T: Real>(g: &mut Graph<T>, p: &BoundParams, c: &RssNetConfig, y: Var) -> Result<ForwardOutput> {
    let y = match g.shape(y).len() {
        2 => {
            let s = g.shape(y).to_vec();
            g.reshape(y, &[s[0], 1, s[1]])?
        }
        _ => y,
    };
    let h = encode(g, p, c, y)?;
    let (chunks, geo) = chunk(g, h, c.chunk)?;
    let r = unroll(g, p, c, chunks)?;
    let r_hat = overlap_add(g, r, &geo)?;
    let (estimates, masks) = mask_and_decode(g, p, c, r_hat, h)?;
    Ok(ForwardOutput {
        estimates,
        encoded: h,
        masks,
    })
}

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RssNet {
    pub config: RssNetConfig,
    pub params: RssNetParams,
}

impl RssNet {
    pub fn new(config: RssNetConfig, seed: u64) -> Result<Self> {
        let params = RssNetParams::init(&config, seed)?;
        Ok(RssNet { config, params })
    }

    /// Eval-mode separation of a batch of mixtures; returns, per mixture,
    /// `C` spectra of length `L`.
    pub fn separate(&self, mixtures: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
        if mixtures.is_empty() {
            return Ok(Vec::new());
        }
        let l = self.config.length;
        if let Some(m) = mixtures.iter().find(|m| m.len() != l) {
            return Err(Error::dim("separate", &[m.len()], &[l]));
        }
        let mut g = Graph::<f32>::new();
        let p = self.params.bind(&mut g, false);
        let data: Vec<f32> = mixtures.iter().flatten().map(|&v| v as f32).collect();
        let y = g.constant(Tensor::new(&[mixtures.len(), 1, l], data)?);
        let out = forward(&mut g, &p, &self.config, y)?;
        let est = g.value(out.estimates);
        if !est.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(est
            .chunks(self.config.sources * l)
            .map(|sample| sample.chunks(l).map(|s| s.iter().map(|&v| v as f64).collect()).collect())
            .collect())
    }
}
