//! Ordered parallel map over replica indices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Worker-count setting; `None` uses the global rayon pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Workers(pub Option<usize>);

impl Workers {
    pub fn fixed(threads: usize) -> Self {
        Workers(Some(threads.max(1)))
    }

    /// Runs `f(0..count)` in parallel and returns results in index order.
    /// Each call owns nothing shared, so the output is independent of the
    /// worker count.
    pub fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self.0 {
            Some(1) => (0..count).map(f).collect(),
            Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| (0..count).into_par_iter().map(&f).collect()),
                Err(_) => (0..count).map(f).collect(),
            },
            None => (0..count).into_par_iter().map(f).collect(),
        }
    }

    /// Fallible variant; the first error in index order wins.
    pub fn try_map<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(count, f).into_iter().collect::<Result<Vec<T>, Error>>()
    }
}
