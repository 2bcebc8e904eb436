//! Execution-mode switch between the rayon data-parallel paths and their
//! sequential equivalents.
//!
//! Every parallel path in this crate is written so that its output is
//! bitwise identical to the sequential one: work items draw from
//! independently derived rng streams and results are combined in index
//! order. `ExecMode` therefore only changes wall time, never results.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Uses the current rayon thread pool. Without the `parallel` feature
    /// this falls back to the sequential path.
    Parallel,
}

impl ExecMode {
    /// Parallel when the crate was built with the `parallel` feature.
    pub fn auto() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl Default for ExecMode {
    fn default() -> Self {
        ExecMode::auto()
    }
}

/// Map `0..n` through `f`, preserving index order in the output.
pub(crate) fn map_indexed<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| (i as f64).sqrt() * 3.0 + 1.0;
        let seq = map_indexed(ExecMode::Sequential, 1000, f);
        let par = map_indexed(ExecMode::Parallel, 1000, f);
        assert_eq!(seq, par);
    }
}
