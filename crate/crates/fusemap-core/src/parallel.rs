//! Execution policy for the embarrassingly parallel parts of the crate
//! (batch cost evaluation, population fitness, exhaustive enumeration).
//!
//! With the default `parallel` feature the work runs on a dedicated rayon
//! pool; without it, or with an explicitly sequential executor, the same
//! entry points run on the calling thread. Results are order-preserving
//! either way, so the two modes are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("threads", &self.threads()).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::auto()
    }
}

impl Executor {
    /// Thread count from `FUSEMAP_THREADS` if set, otherwise the machine's
    /// available parallelism. A count of one (or a non-parallel build) means
    /// sequential execution.
    pub fn auto() -> Executor {
        let threads = std::env::var("FUSEMAP_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Executor::with_threads(threads)
    }

    pub fn sequential() -> Executor {
        Executor {
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    #[cfg(feature = "parallel")]
    pub fn with_threads(threads: usize) -> Executor {
        if threads <= 1 {
            return Executor::sequential();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("spawning a rayon pool");
        Executor { pool: Some(pool) }
    }

    #[cfg(not(feature = "parallel"))]
    pub fn with_threads(_threads: usize) -> Executor {
        Executor::sequential()
    }

    pub fn threads(&self) -> usize {
        #[cfg(feature = "parallel")]
        {
            self.pool.as_ref().map_or(1, |p| p.current_num_threads())
        }
        #[cfg(not(feature = "parallel"))]
        {
            1
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub(crate) fn map_slice<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = Executor::sequential().map_slice(&items, |x| x * x);
        let par = Executor::with_threads(4).map_slice(&items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 999 * 999);
    }

    #[test]
    fn thread_counts() {
        assert_eq!(Executor::sequential().threads(), 1);
        assert_eq!(Executor::with_threads(1).threads(), 1);
        if cfg!(feature = "parallel") {
            assert_eq!(Executor::with_threads(3).threads(), 3);
        }
    }

    #[test]
    fn auto_respects_env_override() {
        std::env::set_var("FUSEMAP_THREADS", "2");
        let threads = Executor::auto().threads();
        std::env::remove_var("FUSEMAP_THREADS");
        if cfg!(feature = "parallel") {
            assert_eq!(threads, 2);
        } else {
            assert_eq!(threads, 1);
        }
    }
}
