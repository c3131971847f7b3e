//! Order-preserving parallel map over independent inputs.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Evaluates `f(0..n)` on `workers` threads (the global pool when `None`) and
/// returns the results in index order, so output never depends on scheduling.
pub fn run_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        None => run(),
        Some(0) => Err(Error::InvalidArgument("worker count must be >= 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {w} workers: {e}")))?
            .install(run),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_canonical() {
        let a = run_indexed(50, Some(1), |i| Ok(i * i)).unwrap();
        let b = run_indexed(50, Some(4), |i| Ok(i * i)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
        assert!(run_indexed(3, Some(0), Ok).is_err());
    }
}
