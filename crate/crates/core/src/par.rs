//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the items run on rayon; without it, or with
//! [`Parallelism::Sequential`], they run in order on the calling thread.
//! Results are always returned in input order, so callers get identical
//! output whatever the degree of parallelism.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// A dedicated pool with this many threads.
    Threads(usize),
    /// The global pool.
    #[default]
    Available,
}

impl Parallelism {
    /// `jobs == 1` is sequential, `0` means all available cores.
    pub fn from_jobs(jobs: usize) -> Self {
        match jobs {
            0 => Parallelism::Available,
            1 => Parallelism::Sequential,
            n => Parallelism::Threads(n),
        }
    }
}

pub fn map<T, R, F>(items: &[T], parallelism: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match parallelism {
        Parallelism::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Available => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Parallelism::Threads(n) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(_) => items.iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        _ => items.iter().map(f).collect(),
    }
}
