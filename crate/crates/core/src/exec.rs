//! Data-parallel helpers.
//!
//! With the `parallel` feature, work is split across the current rayon pool
//! when it has more than one thread and the job is large enough. Every helper
//! hands each closure a disjoint output chunk, so results never depend on how
//! the work was scheduled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many scalar operations a job always runs inline.
const MIN_PARALLEL_WORK: usize = 1 << 14;

/// Number of worker threads that data-parallel operations will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Whether parallel execution was compiled in.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[inline]
fn go_parallel(work: usize) -> bool {
    current_threads() > 1 && work >= MIN_PARALLEL_WORK
}

/// Calls `f(index, chunk)` for every `chunk_len`-sized chunk of `data`.
///
/// `work` estimates the total number of scalar operations and decides whether
/// the job is worth distributing.
pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, work: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 {
        return;
    }
    if go_parallel(work) {
        #[cfg(feature = "parallel")]
        {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Order-preserving map over `0..n`.
pub(crate) fn map_indices<U, F>(n: usize, work: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    if go_parallel(work) {
        #[cfg(feature = "parallel")]
        {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}
