//! Chunked execution of data-parallel loops.
//!
//! Every parallel loop in the crate goes through these helpers. Work is
//! split at fixed chunk boundaries chosen by the caller, each chunk either
//! writes a disjoint output slice or returns a partial result that the
//! caller merges in chunk order. Because the split does not depend on the
//! thread count, the rayon build, the sequential build, and any `--threads`
//! setting all produce bitwise-identical numbers.
//!
//! `set_sequential(true)` forces the fallback path at runtime even when the
//! `parallel` feature is compiled in; the benchmark suite uses it to compare
//! the two paths inside one binary, and the CLI maps `--threads 1` to it.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential path at runtime. Affects all subsequent calls in the
/// process.
pub fn set_sequential(seq: bool) {
    FORCE_SEQUENTIAL.store(seq, Ordering::Relaxed);
}

/// True when loops will run sequentially, either because the crate was built
/// without the `parallel` feature or because of `set_sequential(true)`.
pub fn sequential() -> bool {
    !cfg!(feature = "parallel") || FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Run `f(chunk_index, chunk)` over consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Number of chunks of size `chunk` needed to cover `len` elements.
pub fn chunk_count(len: usize, chunk: usize) -> usize {
    len.div_ceil(chunk)
}


/// Apply a thread-count request: 0 keeps the defaults, 1 forces the
/// sequential path, larger values size the rayon pool. Pool sizing only
/// takes effect on the first call in a process; results are identical for
/// every setting, only throughput changes.
pub fn configure_threads(n: usize) {
    if n == 1 {
        set_sequential(true);
    }
    #[cfg(feature = "parallel")]
    if n > 1 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}
