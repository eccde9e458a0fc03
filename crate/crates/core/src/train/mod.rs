//! Permutation-invariant SI-SNR training.
//!
//! The loss is the negative mean SI-SNR over sources under the best
//! output-to-target assignment. Parameters are updated by Adam after the
//! global gradient norm is clipped. Epoch shuffles and dropout masks are
//! drawn from seeds derived from `(seed, epoch, batch)`, so a run resumed
//! from a checkpoint follows the same trajectory as an uninterrupted one.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, clip_grad_norm, global_norm, AdamState, NamedGrads, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use loss::{pit_si_snr_loss, pit_loss_value};
pub use trainer::{
    batch_gradients, evaluate, train, train_epoch, EpochRecord, Executor, Sequential, TrainConfig, TrainState,
    ValidationStats,
};
