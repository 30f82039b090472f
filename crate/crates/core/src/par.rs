//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! a rayon pool; without it everything runs on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the sequential path is used unconditionally.
#[cfg(feature = "parallel")]
const MIN_PARALLEL: usize = 64;

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= MIN_PARALLEL && rayon::current_num_threads() > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Maps over independent jobs (sweep points, seeds), always fanning out
/// when parallelism is available.
pub fn map_jobs<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Caps the global worker count; no effect in sequential builds or once the
/// pool is built.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        if let Some(t) = threads.filter(|&t| t > 0) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Runs `f` on a private pool of `threads` workers; a single worker takes
/// the sequential paths. Sequential builds just call `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = map_indexed(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        let w = map_jobs(&[3, 1, 2], |&x| x + 1);
        assert_eq!(w, vec![4, 2, 3]);
    }

    #[test]
    fn single_worker_matches_pool() {
        let f = || map_indexed(500, |i| (i as f64).sqrt().sin());
        assert_eq!(with_threads(1, f), with_threads(4, f));
    }
}
