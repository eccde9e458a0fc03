//! The dual-path separation network.
//!
//! ```text
//! y ─ encoder ─ h ─ chunk ─ H ─ [block x iter] ─ overlap-add ─ mask net ─ M_i
//!                                                              h * M_i ─ decoder ─ s_i
//! ```
//!
//! A block runs a top-down attention (TDA) module along the chunk axis
//! (intra) and then along the chunk-index axis (inter), each with a residual
//! branch that optionally carries a depth-wise convolution. All functions
//! are generic over the graph precision so the same code trains in `f32`
//! and is gradient-checked in `f64`.

mod block;
mod config;
mod net;
mod params;
mod tda;

pub use block::{rssnet_block, unroll};
pub use config::{ChunkGeometry, DwConvPath, RssNetConfig, GLN_EPS};
pub use net::{chunk, encode, forward, mask_and_decode, overlap_add, ForwardOutput, RssNet};
pub use params::{count_params, param_specs, BoundParams, Init, ParamSpec, RssNetParams};
pub use tda::{tda_forward, TdaTrace};
