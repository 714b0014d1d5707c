//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel map collects results in index order, and all floating-point
//! reductions happen afterwards on a single thread, so output does not depend
//! on the policy or on the worker count.

use std::ops::Range;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing. `workers: None` uses the global pool. Without the
    /// `parallel` feature this runs sequentially.
    Parallel { workers: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { workers: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_workers(workers: usize) -> Self {
        Execution::Parallel {
            workers: Some(workers),
        }
    }

    /// Runs `op` inside a pool sized for this policy.
    pub fn install<R: Send>(self, op: impl FnOnce() -> R + Send) -> Result<R> {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel { workers: Some(w) } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| crate::error::OsvError::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(op))
            }
            _ => Ok(op()),
        }
    }

    pub(crate) fn map_range<T, F>(self, range: Range<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel { .. } => {
                use rayon::prelude::*;
                range.into_par_iter().map(f).collect()
            }
            _ => range.map(f).collect(),
        }
    }
}
