//! Row-parallel helpers.
//!
//! Every parallel map collects results in index order, and all reductions
//! over those results run sequentially afterwards, so the `parallel` and
//! sequential paths produce bit-identical output.

/// Execution strategy for the pairwise kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise sequential.
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

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(1000, Exec::Sequential, f);
        let b = map_indexed(1000, Exec::Parallel, f);
        assert_eq!(a, b);
    }
}
