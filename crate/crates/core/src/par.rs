//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `map_*` functions run on the
//! rayon pool; without it they run in order on the calling thread. Both
//! paths return results in index order, so every caller is deterministic
//! regardless of the feature or the pool size.

/// Applies `f` to `0..n` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        parallel::map_indexed(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sequential::map_indexed(n, f)
    }
}

/// Applies `f` to consecutive chunks of `items` of length `chunk` (the last
/// may be shorter) and collects one result per chunk, in order.
pub fn map_chunks<I, T, F>(items: &[I], chunk: usize, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&[I]) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        parallel::map_chunks(items, chunk, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sequential::map_chunks(items, chunk, f)
    }
}

/// True when the crate was built with the rayon backend.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

pub mod sequential {
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }

    pub fn map_chunks<I, T, F>(items: &[I], chunk: usize, f: F) -> Vec<T>
    where
        F: Fn(&[I]) -> T,
    {
        assert!(chunk > 0, "chunk length must be positive");
        items.chunks(chunk).map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub mod parallel {
    use rayon::prelude::*;

    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }

    pub fn map_chunks<I, T, F>(items: &[I], chunk: usize, f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&[I]) -> T + Sync + Send,
    {
        assert!(chunk > 0, "chunk length must be positive");
        items.par_chunks(chunk).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_index_order() {
        assert_eq!(map_indexed(50, |i| i * i), (0..50).map(|i| i * i).collect::<Vec<_>>());
        let items: Vec<u32> = (0..10).collect();
        let sums = map_chunks(&items, 4, |c| c.iter().sum::<u32>());
        assert_eq!(sums, vec![6, 22, 17]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn backends_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = sequential::map_indexed(1000, f);
        let b = parallel::map_indexed(1000, f);
        assert_eq!(a, b);
    }
}
