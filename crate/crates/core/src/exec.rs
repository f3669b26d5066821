//! Chunked data-parallel execution with a sequential fallback.
//!
//! Work is always split into the same fixed-size chunks regardless of the policy, and
//! per-chunk results come back in chunk order. Reductions over those results are therefore
//! bitwise identical between the sequential and parallel paths.

use std::ops::Range;

/// How chunked loops are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecPolicy {
    #[default]
    Sequential,
    /// Fan chunks out over the rayon pool. Falls back to sequential execution when the
    /// crate is built without the `parallel` feature.
    Parallel,
}

impl ExecPolicy {
    /// Policy for a `threads` setting: one thread means sequential.
    pub fn from_threads(threads: usize) -> Self {
        if threads > 1 {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Split `0..n` into consecutive ranges of at most `chunk` elements.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

/// Apply `f` to every chunk of `0..n`, returning results in chunk order.
pub fn map_chunks<R, F>(policy: ExecPolicy, n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let ranges = chunk_ranges(n, chunk);
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return ranges.into_par_iter().map(f).collect();
    }
    let _ = policy;
    ranges.into_iter().map(f).collect()
}
