use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::model::RssNetParams;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Gradients keyed by parameter name.
pub type NamedGrads = BTreeMap<String, Vec<f32>>;

/// Global L2 norm over every array, accumulated in `f64`.
pub fn global_norm(grads: &NamedGrads) -> f64 {
    let sq: f64 = grads.values().flatten().map(|&g| (g as f64) * (g as f64)).sum();
    Float::sqrt(sq)
}

/// Scales every gradient by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut NamedGrads, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Config(format!("clip norm must be positive, got {max_norm}")));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut().flatten() {
            *g = ((*g as f64) * scale) as f32;
        }
    }
    Ok(norm)
}

/// First and second moment estimates per parameter plus the step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn for_params(params: &RssNetParams) -> Self {
        let mut s = AdamState::default();
        for (name, t) in params.iter() {
            s.m.insert(name.clone(), vec![0.0; t.len()]);
            s.v.insert(name.clone(), vec![0.0; t.len()]);
        }
        s
    }

    /// Advances the step counter; call once per optimizer step before
    /// [`AdamState::update`].
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected update of one named array.
    pub fn update(&mut self, name: &str, param: &mut [f32], grad: &[f32], lr: f64) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::dim("adam update", &[param.len()], &[grad.len()]));
        }
        if self.step == 0 {
            return Err(Error::Contract("AdamState::update before begin_step".into()));
        }
        let n = param.len();
        let m = self.m.entry(name.into()).or_insert_with(|| vec![0.0; n]);
        if m.len() != n {
            return Err(Error::dim("adam moment", &[m.len()], &[n]));
        }
        let v = self.v.entry(name.into()).or_insert_with(|| vec![0.0; n]);
        let t = self.step as i32;
        let c1 = 1.0 - Float::powi(self.beta1, t);
        let c2 = 1.0 - Float::powi(self.beta2, t);
        for i in 0..n {
            let g = grad[i] as f64;
            let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * g;
            let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let upd = lr * (mi / c1) / (Float::sqrt(vi / c2) + self.eps);
            param[i] = (param[i] as f64 - upd) as f32;
        }
        Ok(())
    }
}

/// One Adam step over every parameter. All gradients are checked before
/// any array is touched; a non-finite entry aborts with its name.
pub fn adam_step(params: &mut RssNetParams, grads: &NamedGrads, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    for (name, t) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient for parameter {name}")))?;
        if g.len() != t.len() {
            return Err(Error::dim("adam_step", t.shape(), &[g.len()]));
        }
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {name}")));
        }
    }
    state.begin_step();
    for (name, t) in params.iter_mut() {
        state.update(name, t.data_mut(), &grads[name], lr)?;
    }
    Ok(())
}
