//! Trace-level work distribution.
//!
//! Traces are independent and each draws from its own RNG streams, so the
//! result of [`map_traces`] is the same whichever executor runs it.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon thread pool when the `parallel` feature is enabled and
    /// falls back to sequential execution otherwise.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(trace_id)` for `trace_id in 0..count`, returning results in
/// trace order.
pub fn map_traces<T, F>(count: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        Execution::Parallel => parallel(count, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn executors_agree_and_keep_order() {
        let f = |i: u64| i * i + 1;
        let seq = map_traces(500, Execution::Sequential, f);
        let par = map_traces(500, Execution::Parallel, f);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 50);
    }
}
