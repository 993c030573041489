//! Order-preserving data-parallel map used by every inner loop of the pipeline.
//!
//! With the `parallel` feature (default) work is spread over rayon; without it,
//! or when [`Exec::Sequential`] is requested, items are processed in order on
//! the calling thread. Results always come back in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Like [`Exec::map`], failing with the error of the lowest-indexed failing item.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                let results: Vec<Result<R, E>> = items.par_iter().map(f).collect();
                results.into_iter().collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// [`Exec::try_map`] with at most `limit` items in flight. Used for model
    /// requests, where the bound protects the provider rather than the CPU.
    pub fn try_map_bounded<T, R, E, F>(self, items: &[T], limit: usize, f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel if limit > 1 && items.len() > 1 => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(limit).build() {
                    Ok(pool) => {
                        let results: Vec<Result<R, E>> =
                            pool.install(|| items.par_iter().map(f).collect());
                        results.into_iter().collect()
                    }
                    Err(err) => {
                        log::warn!("falling back to sequential requests: {err}");
                        items.iter().map(f).collect()
                    }
                }
            }
            _ => {
                let _ = limit;
                items.iter().map(f).collect()
            }
        }
    }
}
