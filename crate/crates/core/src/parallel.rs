//! Fan-out of independent campaign cells.
//!
//! With the `parallel` feature (default) cells run on the rayon pool;
//! without it they run in order on the calling thread. Results always come
//! back in input order.

/// Whether cells are executed on a thread pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `items` in order on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, in parallel when available.
#[cfg(feature = "parallel")]
pub fn map_cells<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_parallel(items, f)
}

/// Maps `f` over `items` (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn map_cells<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

/// Runs `op` with at most `threads` workers. `None` or a sequential build
/// runs `op` directly.
pub fn with_thread_cap<R, F>(threads: Option<usize>, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(op);
        }
    }
    let _ = threads;
    op()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..200).collect();
        let out = with_thread_cap(Some(3), || map_cells(&items, |x| x * x));
        assert_eq!(out, map_sequential(&items, |x| x * x));
    }
}
