//! Data-parallel helpers.
//!
//! With the `parallel` feature the cell loops run on the rayon pool; without
//! it (or inside [`sequential`]) they run on the calling thread. Only
//! element-wise maps are parallelised. Reductions stay sequential so results
//! are bit-identical for any thread count.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Grids below this many cells are never split across threads.
pub const MIN_PARALLEL_LEN: usize = 2048;

/// Run `f` with every helper in this module pinned to the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let previous = FORCE_SEQUENTIAL.with(|flag| flag.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|flag| flag.set(previous));
    out
}

/// Whether the helpers will currently dispatch to rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(Cell::get)
}

/// `out[i] = f(i)` for every index.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() && out.len() >= MIN_PARALLEL_LEN {
        use rayon::prelude::*;
        out.par_iter_mut()
            .with_min_len(MIN_PARALLEL_LEN / 4)
            .enumerate()
            .for_each(|(i, slot)| *slot = f(i));
        return;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

/// Collect `f(i)` for `i in 0..n`, in index order.
pub fn map_range<T, F>(n: usize, min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() && n >= min_len.max(2) {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = min_len;
    (0..n).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_range(items.len(), 2, |i| f(&items[i]))
}
