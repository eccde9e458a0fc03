use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RssNetConfig;
use crate::autograd::{Graph, Real, Tensor, Var};
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
    Constant(f32),
}

/// Name, shape and initialiser of one trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

struct Specs(Vec<ParamSpec>);

impl Specs {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) {
        self.0.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init: Init::FanIn(fan_in),
        });
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f32) {
        self.0.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init: Init::Constant(value),
        });
    }

    /// `[out, in, k]` convolution with bias.
    fn conv(&mut self, prefix: &str, out: usize, inp: usize, k: usize) {
        self.weight(format!("{prefix}.weight"), &[out, inp, k], inp * k);
        self.constant(format!("{prefix}.bias"), &[out], 0.0);
    }

    /// `[out, in]` linear layer with bias.
    fn linear(&mut self, prefix: &str, out: usize, inp: usize) {
        self.weight(format!("{prefix}.weight"), &[out, inp], inp);
        self.constant(format!("{prefix}.bias"), &[out], 0.0);
    }

    fn norm(&mut self, prefix: &str, n: usize) {
        self.constant(format!("{prefix}.gain"), &[n], 1.0);
        self.constant(format!("{prefix}.bias"), &[n], 0.0);
    }

    fn tda(&mut self, p: &str, c: &RssNetConfig) {
        let (n, dm) = (c.n, c.d_model);
        for s in 0..c.depth {
            self.conv(&format!("{p}.down.{s}.conv"), n, 1, 5);
            self.norm(&format!("{p}.down.{s}.norm"), n);
        }
        self.linear(&format!("{p}.ga.in_proj"), dm, n);
        for m in ["q", "k", "v", "o"] {
            self.linear(&format!("{p}.ga.mha.{m}"), dm, dm);
        }
        self.linear(&format!("{p}.ga.ffn.up"), c.ffn_dim, dm);
        self.linear(&format!("{p}.ga.ffn.down"), dm, c.ffn_dim);
        self.linear(&format!("{p}.ga.out_proj"), n, dm);
        for s in 0..c.depth {
            self.conv(&format!("{p}.la.{s}.gate"), n, n, 1);
            self.conv(&format!("{p}.la.{s}.shift"), n, n, 1);
        }
    }
}

/// Every trainable array of the network in a fixed order.
pub fn param_specs(c: &RssNetConfig) -> Vec<ParamSpec> {
    let mut s = Specs(Vec::new());
    let n = c.n;
    s.conv("encoder.conv", n, 1, c.enc_kernel);
    s.norm("encoder.norm", n);
    s.constant("encoder.act.slope".into(), &[n], 0.25);
    for b in 0..c.block_sets() {
        s.tda(&format!("blocks.{b}.intra"), c);
        s.tda(&format!("blocks.{b}.inter"), c);
        let kd = c.dwconv_kernel;
        for (on, name) in [(c.dwconv_path.on_intra(), "path_intra"), (c.dwconv_path.on_inter(), "path_inter")] {
            if on {
                s.weight(format!("blocks.{b}.{name}.weight"), &[n, kd, kd], kd * kd);
                s.constant(format!("blocks.{b}.{name}.bias"), &[n], 0.0);
            }
        }
    }
    for f in 0..c.fuse_sets() {
        s.conv(&format!("separator.fuse.{f}"), n, n, 1);
    }
    s.constant("mask.act.slope".into(), &[n], 0.25);
    s.conv("mask.conv", c.sources * n, n, 1);
    // transpose-convolution kernel [C_in, C_out, k]; fan-in follows C_out * k
    s.weight("decoder.weight".into(), &[n, 1, c.enc_kernel], c.enc_kernel);
    s.0
}

/// Closed-form parameter count of a configuration.
pub fn count_params(c: &RssNetConfig) -> usize {
    param_specs(c).iter().map(|s| s.shape.iter().product::<usize>()).sum()
}

/// Named trainable arrays of one network, stored at training precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RssNetParams {
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl RssNetParams {
    /// Fresh initialisation; each array draws from its own seeded stream.
    pub fn init(config: &RssNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut tensors = BTreeMap::new();
        for (i, spec) in param_specs(config).into_iter().enumerate() {
            let len = spec.shape.iter().product();
            let data = match spec.init {
                Init::Constant(v) => vec![v; len],
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / Float::sqrt(fan_in as f64);
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 0x1417));
                    (0..len).map(|_| rng.random_range(-bound..bound) as f32).collect()
                }
            };
            tensors.insert(spec.name, Tensor::new(&spec.shape, data)?);
        }
        Ok(RssNetParams { tensors })
    }

    /// Builds a parameter set from named arrays, checking names and shapes
    /// against `config`.
    pub fn from_tensors(config: &RssNetConfig, tensors: BTreeMap<String, Tensor<f32>>) -> Result<Self> {
        let specs = param_specs(config);
        for spec in &specs {
            match tensors.get(&spec.name) {
                None => return Err(Error::Config(format!("missing parameter {}", spec.name))),
                Some(t) if t.shape() != spec.shape.as_slice() => {
                    return Err(Error::dim("parameter shape", t.shape(), &spec.shape));
                }
                Some(t) if !t.is_finite() => return Err(Error::NonFinite(format!("parameter {}", spec.name))),
                _ => {}
            }
        }
        if tensors.len() != specs.len() {
            let extra = tensors
                .keys()
                .find(|k| !specs.iter().any(|s| &s.name == *k))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Config(format!("unexpected parameter {extra}")));
        }
        Ok(RssNetParams { tensors })
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.tensors.get_mut(name)
    }

    /// Arrays in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<f32>)> {
        self.tensors.iter_mut()
    }

    pub fn into_tensors(self) -> BTreeMap<String, Tensor<f32>> {
        self.tensors
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }

    /// Adds every array to `g` as a leaf, cast to `T`.
    pub fn bind<T: Real>(&self, g: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| (name.clone(), g.leaf(t.cast(), trainable)))
            .collect();
        BoundParams { vars }
    }
}

/// Graph handles of a bound parameter set.
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        BoundParams {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter {name} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}
