//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a dedicated rayon
//! pool; without it, or with a single worker, everything runs in order on the
//! calling thread. Results are always returned in input order.

#[cfg(feature = "parallel")]
use std::sync::Arc;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SSMA_RL_THREADS";

/// A handle to the worker pool used for rollouts and Monte-Carlo loops.
#[derive(Clone)]
pub struct Workers {
    count: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers")
            .field("count", &self.count)
            .finish()
    }
}

impl Workers {
    /// Runs everything on the calling thread.
    pub fn sequential() -> Self {
        Self {
            count: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// A pool of `count` workers, capped by `SSMA_RL_THREADS` when set.
    pub fn new(count: usize) -> Self {
        let cap = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&c| c > 0);
        let count = cap.map_or(count, |c| count.min(c)).max(1);
        Self::build(count)
    }

    /// One worker per available core, subject to the environment cap.
    pub fn available() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    #[cfg(feature = "parallel")]
    fn build(count: usize) -> Self {
        if count == 1 {
            return Self::sequential();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .thread_name(|i| format!("ssma-worker-{i}"))
            .build()
            .ok()
            .map(Arc::new);
        Self { count, pool }
    }

    #[cfg(not(feature = "parallel"))]
    fn build(count: usize) -> Self {
        Self { count }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::sequential()
    }
}
