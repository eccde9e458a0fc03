use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which residual branch of a block carries the depth-wise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DwConvPath {
    /// Both residual branches are identities.
    None,
    /// Convolution on the intra-chunk residual.
    P1,
    /// Convolution on the inter-chunk residual.
    P2,
    /// Convolution on both residuals (separate kernels).
    P3,
}

impl DwConvPath {
    pub fn on_intra(self) -> bool {
        matches!(self, DwConvPath::P1 | DwConvPath::P3)
    }

    pub fn on_inter(self) -> bool {
        matches!(self, DwConvPath::P2 | DwConvPath::P3)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(DwConvPath::None),
            "p1" => Ok(DwConvPath::P1),
            "p2" => Ok(DwConvPath::P2),
            "p3" => Ok(DwConvPath::P3),
            other => Err(Error::Config(format!("unknown dwconv path {other:?} (none|p1|p2|p3)"))),
        }
    }
}

/// Architecture hyperparameters. Serialised field names follow the usual
/// single-letter notation (`N`, `L`, `K`, `S`, `C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssNetConfig {
    /// Feature channels.
    #[serde(rename = "N")]
    pub n: usize,
    pub enc_kernel: usize,
    pub enc_stride: usize,
    /// Spectrum length.
    #[serde(rename = "L")]
    pub length: usize,
    /// Chunk size.
    #[serde(rename = "K")]
    pub chunk: usize,
    /// Block unrollings.
    pub iter: usize,
    /// Down-sampling depth of each TDA module.
    #[serde(rename = "S")]
    pub depth: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// Number of separated sources.
    #[serde(rename = "C")]
    pub sources: usize,
    pub dwconv_path: DwConvPath,
    pub dwconv_kernel: usize,
    pub weight_sharing: bool,
}

/// Normalisation epsilon of every GLN layer.
pub const GLN_EPS: f64 = 1e-8;

/// Chunk stride `floor(K / 2)`, window count `T` and tail padding for a
/// feature sequence of length `len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkGeometry {
    pub len: usize,
    pub size: usize,
    pub stride: usize,
    pub count: usize,
    pub pad: usize,
}

impl ChunkGeometry {
    pub fn new(len: usize, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!("chunk size must be at least 2, got {size}")));
        }
        if len < size {
            return Err(Error::Config(format!("sequence length {len} is shorter than chunk size {size}")));
        }
        let stride = size / 2;
        let count = (len - size).div_ceil(stride) + 1;
        let pad = (count - 1) * stride + size - len;
        Ok(ChunkGeometry {
            len,
            size,
            stride,
            count,
            pad,
        })
    }
}

impl RssNetConfig {
    /// Full-size configuration (about 5.7M parameters).
    pub fn reference() -> Self {
        RssNetConfig {
            n: 256,
            enc_kernel: 3,
            enc_stride: 1,
            length: 1024,
            chunk: 45,
            iter: 6,
            depth: 3,
            heads: 8,
            d_model: 512,
            ffn_dim: 1024,
            dropout: 0.1,
            sources: 2,
            dwconv_path: DwConvPath::P1,
            dwconv_kernel: 1,
            weight_sharing: true,
        }
    }

    /// Scaled-down configuration that trains on one CPU core.
    pub fn desk() -> Self {
        RssNetConfig {
            n: 32,
            length: 256,
            chunk: 16,
            iter: 2,
            depth: 2,
            heads: 4,
            d_model: 64,
            ffn_dim: 128,
            ..Self::reference()
        }
    }

    /// Smallest configuration exercised by gradient checks.
    pub fn tiny() -> Self {
        RssNetConfig {
            n: 8,
            length: 32,
            chunk: 8,
            iter: 2,
            depth: 2,
            heads: 2,
            d_model: 8,
            ffn_dim: 16,
            dropout: 0.0,
            ..Self::reference()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "reference" => Ok(Self::reference()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!("unknown model preset {other:?} (reference|desk|tiny)"))),
        }
    }

    pub fn enc_pad(&self) -> usize {
        self.enc_kernel / 2
    }

    /// Encoded sequence length `L'`.
    pub fn encoded_len(&self) -> usize {
        (self.length + 2 * self.enc_pad()).saturating_sub(self.enc_kernel) / self.enc_stride.max(1) + 1
    }

    pub fn chunks(&self) -> Result<ChunkGeometry> {
        ChunkGeometry::new(self.encoded_len(), self.chunk)
    }

    /// Number of distinct block parameter sets.
    pub fn block_sets(&self) -> usize {
        if self.weight_sharing {
            1
        } else {
            self.iter
        }
    }

    /// Number of distinct inter-iteration fusion convolutions.
    pub fn fuse_sets(&self) -> usize {
        if self.iter < 2 {
            0
        } else if self.weight_sharing {
            1
        } else {
            self.iter - 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.sources == 0 || self.d_model == 0 || self.ffn_dim == 0 {
            return fail("N, C, d_model and ffn_dim must be positive".into());
        }
        if self.enc_kernel == 0 || self.enc_stride == 0 {
            return fail("encoder kernel and stride must be positive".into());
        }
        if self.length < self.enc_kernel {
            return fail(format!("L = {} is shorter than the encoder kernel {}", self.length, self.enc_kernel));
        }
        let decoded = (self.encoded_len() - 1) * self.enc_stride + self.enc_kernel - 2 * self.enc_pad();
        if decoded != self.length {
            return fail(format!(
                "encoder kernel {} / stride {} does not reproduce L = {} through the decoder (got {decoded})",
                self.enc_kernel, self.enc_stride, self.length
            ));
        }
        if self.chunk < 2 {
            return fail(format!("K must be at least 2, got {}", self.chunk));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if self.dwconv_kernel.is_multiple_of(2) {
            return fail(format!("dwconv_kernel must be odd, got {}", self.dwconv_kernel));
        }
        if self.iter == 0 || self.depth == 0 {
            return fail("iter and S must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        let geo = self.chunks()?;
        let min = 1usize << self.depth;
        for (what, len) in [("chunk size K", geo.size), ("chunk count T", geo.count)] {
            if len < min {
                return fail(format!(
                    "{what} = {len} is below the {min} positions required by S = {}",
                    self.depth
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_geometry_examples() {
        let g = ChunkGeometry::new(1024, 45).unwrap();
        assert_eq!((g.stride, g.count, g.pad), (22, 46, 11));
        let g = ChunkGeometry::new(45, 45).unwrap();
        assert_eq!((g.count, g.pad), (1, 0));
        assert!(ChunkGeometry::new(10, 1).is_err());
        assert!(ChunkGeometry::new(10, 11).is_err());
    }

    #[test]
    fn presets_validate() {
        for c in [RssNetConfig::reference(), RssNetConfig::desk(), RssNetConfig::tiny()] {
            c.validate().unwrap();
            assert_eq!(c.encoded_len(), c.length);
        }
        let bad = RssNetConfig {
            heads: 3,
            ..RssNetConfig::desk()
        };
        assert!(bad.validate().is_err());
        let bad = RssNetConfig {
            depth: 5,
            ..RssNetConfig::desk()
        };
        assert!(bad.validate().is_err());
    }
}
