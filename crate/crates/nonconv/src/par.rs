//! Parallel-execution façade.
//!
//! With the `parallel` feature (default), [`indexed_fold`] folds an index
//! range into per-chunk accumulators on the rayon pool and merges them.
//! Without the feature it degrades to a plain sequential fold.  Call sites
//! are identical in both builds.
//!
//! Determinism contract: results are independent of thread count and work
//! splitting provided the per-index work is a pure function of the index and
//! the merge operation is exact (integer) and commutative/associative.  All
//! uses in this crate merge integer histograms, which satisfies that.

/// Folds `0..count` into one or more accumulators created by `make`,
/// applying `fold` for each index, then combines accumulators with `merge`.
///
/// `merge` must be associative and commutative for the result to be
/// independent of how the range is split across threads.
#[cfg(feature = "parallel")]
pub fn indexed_fold<A, MK, F, M>(count: u64, make: MK, fold: F, merge: M) -> A
where
    A: Send,
    MK: Fn() -> A + Sync + Send,
    F: Fn(A, u64) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .fold(&make, |acc, i| fold(acc, i))
        .reduce(&make, |a, b| merge(a, b))
}

/// Sequential build: same contract, single accumulator, no `merge` calls.
#[cfg(not(feature = "parallel"))]
pub fn indexed_fold<A, MK, F, M>(count: u64, make: MK, fold: F, _merge: M) -> A
where
    MK: Fn() -> A,
    F: Fn(A, u64) -> A,
    M: Fn(A, A) -> A,
{
    (0..count).fold(make(), fold)
}

/// Runs `f` on a dedicated pool with `threads` worker threads when the
/// `parallel` feature is on; with the feature off (or `threads` = `None`)
/// runs `f` directly.
pub fn with_thread_count<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("failed to build thread pool")
                .install(f),
            _ => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
