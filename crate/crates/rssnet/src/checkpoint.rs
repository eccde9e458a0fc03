//! Checkpoint files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic "RSNCKPT\0" | version u32
//! config hash [32]            SHA-256 of the model config JSON below
//! config length u32 | model config JSON
//! array count u32
//!   per array: name length u16 | name UTF-8 | rank u8 | dims u32 x rank | values f32
//! training flag u8
//!   if 1: state length u32 | training state JSON
//!         per parameter, in array order: first moment f32 | second moment f32
//! SHA-256 of every preceding byte [32]
//! ```
//!
//! A checkpoint without the training section holds parameters only (the
//! best-validation snapshot); one with it can resume training exactly.

use std::collections::BTreeMap;
use std::path::Path;

use rssnet_core::autograd::Tensor;
use rssnet_core::model::{RssNetConfig, RssNetParams};
use rssnet_core::train::{AdamState, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsio::{read, write};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RSNCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimizer and bookkeeping state needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub train: TrainConfig,
    pub epochs_done: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub adam_step: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub meta: TrainingMeta,
    pub adam: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RssNetConfig,
    pub params: RssNetParams,
    pub training: Option<TrainingSection>,
}

impl Checkpoint {
    pub fn params_only(model: &RssNetConfig, params: &RssNetParams) -> Self {
        Checkpoint {
            model: model.clone(),
            params: params.clone(),
            training: None,
        }
    }

    /// Full snapshot of a run. `state.best_params` is not included; it is
    /// kept in its own params-only checkpoint.
    pub fn from_state(model: &RssNetConfig, train: &TrainConfig, state: &TrainState) -> Self {
        Checkpoint {
            model: model.clone(),
            params: state.params.clone(),
            training: Some(TrainingSection {
                meta: TrainingMeta {
                    train: train.clone(),
                    epochs_done: state.epochs_done,
                    best_epoch: state.best_epoch,
                    best_val_loss: state.best_val_loss,
                    adam_step: state.adam.step,
                    adam_beta1: state.adam.beta1,
                    adam_beta2: state.adam.beta2,
                    adam_eps: state.adam.eps,
                },
                adam: state.adam.clone(),
            }),
        }
    }

    /// Training state to resume from, with `best_params` left empty.
    pub fn into_state(self) -> Result<(TrainConfig, TrainState)> {
        let Some(t) = self.training else {
            return Err(Error::Usage("checkpoint holds parameters only and cannot resume training".into()));
        };
        Ok((
            t.meta.train,
            TrainState {
                params: self.params,
                adam: t.adam,
                epochs_done: t.meta.epochs_done,
                best_epoch: t.meta.best_epoch,
                best_val_loss: t.meta.best_val_loss,
                best_params: None,
            },
        ))
    }
}

fn config_json(model: &RssNetConfig) -> Vec<u8> {
    serde_json::to_vec(model).expect("config serialises")
}

/// SHA-256 (hex) of the compact JSON form of `model`; two configs hash
/// equal exactly when every field is equal.
pub fn config_hash(model: &RssNetConfig) -> String {
    hex::encode(Sha256::digest(config_json(model)))
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = config_json(&ck.model);
    out.extend_from_slice(&Sha256::digest(&cfg));
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(ck.params.len() as u32).to_le_bytes());
    for (name, t) in ck.params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        put_f32s(&mut out, t.data());
    }
    match &ck.training {
        None => out.push(0),
        Some(t) => {
            out.push(1);
            let meta = serde_json::to_vec(&t.meta).expect("meta serialises");
            out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
            out.extend_from_slice(&meta);
            for (name, p) in ck.params.iter() {
                let zeros = vec![0.0; p.len()];
                put_f32s(&mut out, t.adam.m.get(name).unwrap_or(&zeros));
                put_f32s(&mut out, t.adam.v.get(name).unwrap_or(&zeros));
            }
        }
    }
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::format(self.path, format!("truncated at byte {}", self.at)));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Parses checkpoint bytes read from `path` (used in messages only).
///
/// The checksum is verified first. With `expected`, the stored model config
/// must hash equal to it.
pub fn decode(bytes: &[u8], path: &Path, expected: Option<&RssNetConfig>) -> Result<Checkpoint> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint file"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let computed = hex::encode(Sha256::digest(body));
    if computed != hex::encode(trailer) {
        return Err(Error::Checksum {
            path: path.into(),
            stored: hex::encode(trailer),
            computed,
        });
    }
    let mut r = Reader { bytes: body, at: 8, path };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Mismatch {
            what: format!("checkpoint version of {}", path.display()),
            expected: CHECKPOINT_VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let stored_hash = hex::encode(r.take(32)?);
    let n = r.u32()? as usize;
    let cfg_bytes = r.take(n)?;
    if hex::encode(Sha256::digest(cfg_bytes)) != stored_hash {
        return Err(Error::format(path, "stored config hash does not match the stored config"));
    }
    if let Some(want) = expected {
        let want_hash = config_hash(want);
        if want_hash != stored_hash {
            return Err(Error::Mismatch {
                what: format!("model config hash of {}", path.display()),
                expected: want_hash,
                found: stored_hash,
            });
        }
    }
    let model: RssNetConfig = serde_json::from_slice(cfg_bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let count = r.u32()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::format(path, e.to_string()))?
            .to_string();
        let rank = r.u8()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let data = r.f32s(shape.iter().product())?;
        tensors.insert(name, Tensor::new(&shape, data)?);
    }
    let params = RssNetParams::from_tensors(&model, tensors)?;
    let training = match r.u8()? {
        0 => None,
        1 => {
            let n = r.u32()? as usize;
            let meta: TrainingMeta = serde_json::from_slice(r.take(n)?).map_err(|e| Error::format(path, e.to_string()))?;
            let mut adam = AdamState {
                step: meta.adam_step,
                beta1: meta.adam_beta1,
                beta2: meta.adam_beta2,
                eps: meta.adam_eps,
                ..AdamState::default()
            };
            for (name, p) in params.iter() {
                adam.m.insert(name.clone(), r.f32s(p.len())?);
                adam.v.insert(name.clone(), r.f32s(p.len())?);
            }
            Some(TrainingSection { meta, adam })
        }
        other => return Err(Error::format(path, format!("bad training flag {other}"))),
    };
    if r.at != body.len() {
        return Err(Error::format(path, format!("{} trailing bytes", body.len() - r.at)));
    }
    Ok(Checkpoint { model, params, training })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    write(path, &encode(ck))
}

pub fn load(path: &Path, expected: Option<&RssNetConfig>) -> Result<Checkpoint> {
    decode(&read(path)?, path, expected)
}
