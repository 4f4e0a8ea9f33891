//! Run-time switch between sequential loops and the rayon-backed paths.
//!
//! The crate compiles with or without the `parallel` feature; `Auto` uses
//! rayon when the feature is enabled and degrades to the sequential code
//! otherwise, so callers never need their own cfg handling.

/// Execution strategy for data-parallel sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Auto,
}

impl Parallelism {
    /// True when this run should take the rayon path.
    pub fn is_parallel(self) -> bool {
        matches!(self, Parallelism::Auto) && cfg!(feature = "parallel")
    }
}

/// Sizes the global rayon pool; 0 leaves the rayon default. Safe to call
/// more than once (later calls are ignored by rayon) and a no-op without the
/// `parallel` feature.
pub fn configure_thread_pool(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        if threads > 1 {
            log::warn!("built without the `parallel` feature; running sequentially");
        }
    }
}
