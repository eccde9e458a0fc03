use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, clip_grad_norm, AdamState, NamedGrads};
use super::loss::pit_si_snr_loss;
use crate::autograd::{Graph, Tensor};
use crate::data::MixtureSample;
use crate::metrics::{best_permutation, si_snr_improvement};
use crate::model::{forward, RssNetConfig, RssNetParams};
use crate::{derive_seed, Error, Result};

const TAG_INIT: u64 = 0x11;
const TAG_SHUFFLE: u64 = 0x12;
const TAG_DROPOUT: u64 = 0x13;

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Validate every this many epochs (the final epoch is always validated).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            clip_norm: 5.0,
            epochs: 100,
            batch_size: 8,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return fail("epochs, batch_size and eval_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: RssNetParams,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub best_params: Option<RssNetParams>,
}

impl TrainState {
    /// Freshly initialised parameters; the init seed is derived from `seed`.
    pub fn new(model: &RssNetConfig, seed: u64) -> Result<Self> {
        let params = RssNetParams::init(model, derive_seed(seed, 0, TAG_INIT))?;
        Ok(TrainState {
            adam: AdamState::for_params(&params),
            params,
            epochs_done: 0,
            best_epoch: None,
            best_val_loss: None,
            best_params: None,
        })
    }
}

/// One line of the training log. Validation fields are absent on epochs
/// that skip validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_si_snr: Option<f64>,
    pub val_si_snri: Option<f64>,
    pub is_best: bool,
}

/// Validation summary: `loss` is the negative PIT mean SI-SNR averaged over
/// samples; `si_snr` and `si_snri` are per-source means in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub loss: f64,
    pub si_snr: f64,
    pub si_snri: f64,
    pub count: usize,
}

/// Runs independent jobs and returns their results in job order.
pub trait Executor {
    fn workers(&self) -> usize;
    fn map<R, F>(&self, jobs: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn workers(&self) -> usize {
        1
    }

    fn map<R, F>(&self, jobs: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..jobs).map(f).collect()
    }
}

fn batch_tensors(model: &RssNetConfig, batch: &[&MixtureSample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let (l, c) = (model.length, model.sources);
    let mut y = Vec::with_capacity(batch.len() * l);
    let mut t = Vec::with_capacity(batch.len() * c * l);
    for s in batch {
        if s.mixed.len() != l || s.sources.len() != c || s.sources.iter().any(|x| x.len() != l) {
            return Err(Error::dim("training sample", &[s.sources.len(), s.mixed.len()], &[c, l]));
        }
        y.extend(s.mixed.iter().map(|&v| v as f32));
        t.extend(s.sources.iter().flatten().map(|&v| v as f32));
    }
    Ok((Tensor::new(&[batch.len(), 1, l], y)?, Tensor::new(&[batch.len(), c, l], t)?))
}

fn sample_ids(batch: &[&MixtureSample]) -> String {
    let ids: Vec<String> = batch.iter().map(|s| format!("{}:{}", s.split.name(), s.index)).collect();
    ids.join(", ")
}

/// Mean PIT loss of `batch` and its gradient for every parameter.
///
/// The batch is cut into at most `exec.workers()` contiguous shards; shard
/// results are summed in shard order, so a fixed worker count gives a fixed
/// result.
pub fn batch_gradients<E: Executor>(
    model: &RssNetConfig,
    params: &RssNetParams,
    batch: &[&MixtureSample],
    dropout_seed: u64,
    exec: &E,
) -> Result<(f64, NamedGrads)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let shards = exec.workers().clamp(1, batch.len());
    let per = batch.len().div_ceil(shards);
    let parts: Vec<&[&MixtureSample]> = batch.chunks(per).collect();
    let total = batch.len() as f64;
    let results = exec.map(parts.len(), |i| -> Result<(f64, NamedGrads)> {
        let part = parts[i];
        let (y, t) = batch_tensors(model, part)?;
        let mut g = Graph::<f32>::training(derive_seed(dropout_seed, i as u64, TAG_DROPOUT));
        let p = params.bind(&mut g, true);
        let y = g.constant(y);
        let t = g.constant(t);
        let provenance = |what: String| Error::NonFinite(format!("{what} on samples [{}]", sample_ids(part)));
        let loss = forward(&mut g, &p, model, y)
            .and_then(|out| pit_si_snr_loss(&mut g, out.estimates, t))
            .map_err(|e| match e {
                Error::NonFinite(what) => provenance(what),
                other => other,
            })?
            .0;
        let value = g.value(loss)[0] as f64;
        if !value.is_finite() {
            return Err(provenance("training loss".into()));
        }
        let grads = g.backward(loss)?;
        let weight = part.len() as f64 / total;
        let mut named = NamedGrads::new();
        for (name, var) in p.iter() {
            let gr = grads.get(*var).expect("trainable leaf");
            named.insert(name.clone(), gr.iter().map(|&v| (v as f64 * weight) as f32).collect());
        }
        Ok((value * weight, named))
    });
    let mut loss = 0.0;
    let mut acc: Option<NamedGrads> = None;
    for r in results {
        let (l, grads) = r?;
        loss += l;
        match acc.as_mut() {
            None => acc = Some(grads),
            Some(a) => {
                for (name, g) in grads {
                    for (x, y) in a.get_mut(&name).expect("same parameter set").iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
        }
    }
    Ok((loss, acc.expect("at least one shard")))
}

/// One pass over `samples` in a seeded order; returns the sample-weighted
/// mean training loss.
pub fn train_epoch<E: Executor>(
    model: &RssNetConfig,
    cfg: &TrainConfig,
    state: &mut TrainState,
    samples: &[MixtureSample],
    exec: &E,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let epoch = state.epochs_done as u64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch, TAG_SHUFFLE)));
    let epoch_seed = derive_seed(cfg.seed, epoch, TAG_DROPOUT);
    let mut total = 0.0;
    for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
        let batch: Vec<&MixtureSample> = idx.iter().map(|&i| &samples[i]).collect();
        let (loss, mut grads) = batch_gradients(model, &state.params, &batch, derive_seed(epoch_seed, b as u64, TAG_DROPOUT), exec)?;
        clip_grad_norm(&mut grads, cfg.clip_norm)?;
        adam_step(&mut state.params, &grads, &mut state.adam, cfg.lr)?;
        total += loss * batch.len() as f64;
    }
    state.epochs_done += 1;
    Ok(total / samples.len() as f64)
}

/// Eval-mode scores of `params` on `samples`.
pub fn evaluate<E: Executor>(
    model: &RssNetConfig,
    params: &RssNetParams,
    samples: &[MixtureSample],
    batch_size: usize,
    exec: &E,
) -> Result<ValidationStats> {
    if samples.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    let batches: Vec<&[MixtureSample]> = samples.chunks(batch_size.max(1)).collect();
    let results = exec.map(batches.len(), |i| -> Result<Vec<(f64, f64)>> {
        let batch: Vec<&MixtureSample> = batches[i].iter().collect();
        let (y, _) = batch_tensors(model, &batch)?;
        let mut g = Graph::<f32>::new();
        let p = params.bind(&mut g, false);
        let y = g.constant(y);
        let out = forward(&mut g, &p, model, y)?;
        let l = model.length;
        let est: Vec<Vec<f64>> = g
            .value(out.estimates)
            .chunks(l)
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let c = model.sources;
        let mut per = Vec::with_capacity(batch.len());
        for (k, s) in batch.iter().enumerate() {
            let e = &est[k * c..(k + 1) * c];
            let (perm, mean) = best_permutation(e, &s.sources)?;
            let mut imp = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                imp += si_snr_improvement(&e[j], &s.sources[i], &s.mixed)?;
            }
            if !mean.is_finite() {
                return Err(Error::NonFinite(format!("validation SI-SNR of {}:{}", s.split.name(), s.index)));
            }
            per.push((mean, imp / c as f64));
        }
        Ok(per)
    });
    let (mut snr, mut imp, mut n) = (0.0, 0.0, 0usize);
    for r in results {
        for (a, b) in r? {
            snr += a;
            imp += b;
            n += 1;
        }
    }
    let (snr, imp) = (snr / n as f64, imp / n as f64);
    Ok(ValidationStats {
        loss: -snr,
        si_snr: snr,
        si_snri: imp,
        count: n,
    })
}

/// Trains from `state.epochs_done` up to `cfg.epochs`, calling `on_epoch`
/// after each epoch. The best validation loss (earliest on ties) keeps a
/// copy of its parameters in `state.best_params`.
pub fn train<E, F>(
    model: &RssNetConfig,
    cfg: &TrainConfig,
    state: &mut TrainState,
    train_set: &[MixtureSample],
    val_set: &[MixtureSample],
    exec: &E,
    mut on_epoch: F,
) -> Result<()>
where
    E: Executor,
    F: FnMut(&EpochRecord, &TrainState) -> Result<()>,
{
    model.validate()?;
    cfg.validate()?;
    while state.epochs_done < cfg.epochs {
        let train_loss = train_epoch(model, cfg, state, train_set, exec)?;
        let epoch = state.epochs_done;
        let validate = !val_set.is_empty() && (epoch.is_multiple_of(cfg.eval_every) || epoch == cfg.epochs);
        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_si_snr: None,
            val_si_snri: None,
            is_best: false,
        };
        if validate {
            let v = evaluate(model, &state.params, val_set, cfg.batch_size, exec)?;
            record.val_loss = Some(v.loss);
            record.val_si_snr = Some(v.si_snr);
            record.val_si_snri = Some(v.si_snri);
            if state.best_val_loss.is_none_or(|b| v.loss < b) {
                state.best_val_loss = Some(v.loss);
                state.best_epoch = Some(epoch);
                state.best_params = Some(state.params.clone());
                record.is_best = true;
            }
        }
        on_epoch(&record, state)?;
    }
    Ok(())
}
