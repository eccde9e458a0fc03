//! Thread-pool executor for sharded batches.

use rayon::prelude::*;
use rssnet_core::train::Executor;

use crate::{Error, Result};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "RSSNET_WORKERS";

/// Runs jobs on a private pool of `n` threads; with one worker, jobs run
/// on the calling thread.
///
/// Batch gradients are summed in shard order, so results depend on the
/// worker count but not on scheduling.
pub struct Workers {
    n: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("worker count must be at least 1".into()));
        }
        let pool = if n > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))?,
            )
        } else {
            None
        };
        Ok(Workers { n, pool })
    }

    /// One worker unless `RSSNET_WORKERS` says otherwise.
    pub fn from_env() -> Result<Self> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
                Workers::new(n)
            }
            Err(_) => Workers::new(1),
        }
    }
}

impl Executor for Workers {
    fn workers(&self) -> usize {
        self.n
    }

    fn map<R, F>(&self, jobs: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| (0..jobs).into_par_iter().map(&f).collect()),
            None => (0..jobs).map(f).collect(),
        }
    }
}
