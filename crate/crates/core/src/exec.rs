//! Execution policy for batches of independent integrations.
//!
//! A single time integration is sequential. What parallelizes is the batch
//! around it: finite-difference directions, conservation pairs, and scale
//! sweeps. Each job owns its trajectory storage, so nothing is shared
//! mutably. Without the `parallel` feature, `Exec::Parallel` runs serially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exec {
    Serial,
    #[default]
    Parallel,
}

impl Exec {
    /// True if jobs can actually run concurrently in this build.
    pub fn is_concurrent(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `f(0..n)` in index order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// `f` over a slice, results in slice order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }

    /// Runs `op` with at most `workers` threads (0 keeps the global pool).
    pub fn with_workers<R: Send>(self, workers: usize, op: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel && workers > 0 {
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => return pool.install(op),
                Err(e) => log::warn!("could not build a {workers}-thread pool ({e}); using the global pool"),
            }
        }
        let _ = workers;
        op()
    }
}
