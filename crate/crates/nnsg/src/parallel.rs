//! Execution backend: rayon when the `parallel` feature is enabled,
//! plain loops otherwise.
//!
//! Every helper partitions work by fixed-size chunks or per-element
//! ownership, never by thread count, so results are identical across
//! backends and pool sizes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Caps the number of worker threads for the process.
///
/// Call at most once, before any parallel work runs. Has no effect on
/// results, only on how many workers compute them. A no-op in
/// sequential builds.
pub fn configure_thread_cap(threads: usize) -> std::result::Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Maps `f` over `items`, preserving order.
pub(crate) fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f(offset, chunk)` over consecutive `chunk_len`-sized pieces of
/// `data`. `offset` is the index of the chunk's first element. Chunk
/// boundaries depend only on `chunk_len`, so the partition is the same
/// for any worker count.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    debug_assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i * chunk_len, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i * chunk_len, chunk));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let out = map_slice(&items, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn chunked_offsets_cover_everything_once() {
        let mut data = vec![0u32; 1003];
        for_each_chunk_mut(&mut data, 64, |offset, chunk| {
            for (i, v) in chunk.iter_mut().enumerate() {
                *v = (offset + i) as u32;
            }
        });
        for (i, v) in data.iter().enumerate() {
            assert_eq!(*v, i as u32);
        }
    }
}
