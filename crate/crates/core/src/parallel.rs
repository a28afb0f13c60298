//! Data-parallel map over grid indices.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every map runs on the calling thread. Results always come back
//! in input order, so callers never observe scheduling.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Calling thread only.
    Sequential,
    /// A dedicated pool with this many workers.
    Workers(usize),
    /// The process-wide default pool.
    #[default]
    Global,
}

pub struct Pool {
    #[cfg(feature = "parallel")]
    inner: Option<rayon::ThreadPool>,
    sequential: bool,
}

impl Pool {
    pub fn new(parallelism: Parallelism) -> Result<Self> {
        if let Parallelism::Workers(0) = parallelism {
            return Err(Error::Parameter("worker count must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        {
            let inner = match parallelism {
                Parallelism::Workers(n) => Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?,
                ),
                _ => None,
            };
            Ok(Pool { inner, sequential: parallelism == Parallelism::Sequential })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Pool { sequential: true })
        }
    }

    pub fn is_parallel(&self) -> bool {
        !self.sequential
    }

    /// `f` applied to each item, results in input order.
    pub fn map<I, T, F>(&self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        if self.sequential {
            return items.iter().map(f).collect();
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match &self.inner {
                Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                None => items.par_iter().map(&f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            items.iter().map(f).collect()
        }
    }
}

pub fn map<I, T, F>(parallelism: Parallelism, items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    Ok(Pool::new(parallelism)?.map(items, f))
}
