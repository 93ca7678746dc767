/// `f(0), ..., f(count - 1)` in index order, evaluated in parallel when the
/// `parallel` feature is enabled.
pub(crate) fn map_indices<T: Send, F: Fn(usize) -> T + Sync + Send>(count: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Work unit for per-sample Monte Carlo loops; each chunk owns a derived seed.
pub(crate) const CHUNK: usize = 256;
