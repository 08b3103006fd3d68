//! Execution policy for data-parallel loops.
//!
//! Every parallel loop in the crate maps over indices and collects results
//! in index order; reductions happen afterwards in a fixed order. Results are
//! therefore bit-identical across thread counts and between policies.

/// Selects between the rayon-backed and the sequential path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is disabled.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// `f(0), f(1), ..., f(n - 1)` collected in order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Calls `f(row_index, row)` for every `width`-sized chunk of `data`.
    pub fn for_each_row<F>(self, data: &mut [f64], width: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if width == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                data.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
            }
            _ => data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row)),
        }
    }
}
