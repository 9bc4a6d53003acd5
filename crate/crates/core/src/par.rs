//! Order-preserving data-parallel maps with a sequential fallback.
//!
//! Every parallel loop in the crate (Monte Carlo rows, evaluator calls during
//! fitting, design-matrix rows, surrogate evaluation) goes through
//! [`Parallelism::map`] or [`Parallelism::try_map`]. Results always come back
//! in input order, so outputs are identical whichever mode runs them.

use serde::{Deserialize, Serialize};

/// Worker-pool hint passed down from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parallelism {
    /// Plain iterator on the calling thread.
    Sequential,
    /// Rayon's global pool (available parallelism).
    #[default]
    Auto,
    /// A dedicated pool with this many workers.
    Threads(usize),
}

impl Parallelism {
    /// `None` or `0` means [`Parallelism::Auto`], `1` means sequential.
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            None | Some(0) => Parallelism::Auto,
            Some(1) => Parallelism::Sequential,
            Some(n) => Parallelism::Threads(n),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Parallelism::Sequential
    }

    /// Map `f` over `0..n`, collecting in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Parallelism::Sequential => {}
                Parallelism::Auto => return (0..n).into_par_iter().map(f).collect(),
                Parallelism::Threads(k) => {
                    if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                        return pool.install(|| (0..n).into_par_iter().map(f).collect());
                    }
                }
            }
        }
        (0..n).map(f).collect()
    }

    /// Fallible map; the first error in index order is returned.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}
