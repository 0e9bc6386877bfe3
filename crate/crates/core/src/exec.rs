//! Thread fan-out for the data-parallel inner loops (batch scoring,
//! per-sample minibatch gradients).
//!
//! Work items are pure functions of their inputs, so the only thing that
//! could make thread count observable is reduction order — and reductions
//! in this crate always run sequentially over the mapped results in input
//! order. `map` therefore returns bit-identical output for any thread
//! count, which the determinism tests rely on.
//!
//! Built without the `parallel` feature the crate has no rayon dependency
//! and `Executor` always runs sequentially, whatever thread count was
//! requested.

use crate::error::{Error, Result};

pub struct Executor {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `threads == 1` is the sequential path; `threads > 1` spins up a
    /// dedicated rayon pool when the `parallel` feature is enabled.
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Usage("thread count must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        {
            let pool = if threads > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build()
                        .map_err(|e| Error::Usage(format!("cannot build thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Executor { threads, pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Executor { threads })
        }
    }

    pub fn sequential() -> Self {
        Executor::new(1).expect("single-thread executor")
    }

    /// Requested thread count (the sequential build still reports it).
    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Whether `map` actually fans out.
    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Apply `f` to every item, preserving input order in the output. The
    /// index passed to `f` is the item's position, so seed derivation inside
    /// `f` is schedule-independent.
    pub fn map<I, O, F>(&self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(usize, &I) -> O + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                items
                    .par_iter()
                    .enumerate()
                    .map(|(i, item)| f(i, item))
                    .collect()
            });
        }
        items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
    }
}
