//! Execution helpers for the data-parallel inner loops.
//!
//! Every hot loop in the crate is a gather over output slots: each output
//! element is produced by exactly one task that accumulates its inputs in a
//! fixed order. That makes results bitwise identical between the rayon path
//! and the sequential fallback, and independent of the worker count.
//!
//! The `parallel` cargo feature selects whether rayon is available at all;
//! [`set_parallel_enabled`] toggles it at runtime (used by the benchmarks to
//! compare both paths in one process).

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL_ENABLED: AtomicBool = AtomicBool::new(true);

/// Enable or disable the rayon path at runtime. No-op without the
/// `parallel` feature.
pub fn set_parallel_enabled(enabled: bool) {
    PARALLEL_ENABLED.store(enabled, Ordering::Relaxed);
}

/// True when work will actually be dispatched through rayon.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL_ENABLED.load(Ordering::Relaxed)
}

/// Fill `out`, treated as rows of `stride` contiguous elements, by calling
/// `f(row_index, row_slice)` for every row.
pub fn for_each_chunk_mut<T, F>(out: &mut [T], stride: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(stride > 0 && out.len() % stride == 0);
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        out.par_chunks_mut(stride)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
        return;
    }
    for (i, chunk) in out.chunks_mut(stride).enumerate() {
        f(i, chunk);
    }
}

/// Map `0..n` to a vector, running the closure per index.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
