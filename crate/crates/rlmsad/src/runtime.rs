//! Data-parallel map helpers. The `parallel` feature routes through rayon;
//! without it everything runs sequentially. Output order is index order in
//! both modes, so results are reproducible regardless of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map a function over items, preserving input order in the output.
pub fn map_ordered<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential reference path, available in every build for benchmarking.
pub fn map_ordered_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Cap the rayon worker count for this process. No-op in sequential builds.
pub fn limit_workers(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            // Ignore the error if a global pool already exists.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
    }
}
