//! Replicate-level execution.
//!
//! Replicates and replay trials are independent, so they are mapped over an
//! index range. With the `parallel` feature the map runs on a rayon pool
//! (capped by `BIDS_THREADS` when set); without it, or with
//! [`Execution::Sequential`], it is a plain loop. Results always come back in
//! index order.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

pub const THREADS_ENV: &str = "BIDS_THREADS";

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(mode: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => parallel_map(n, f),
    }
}

/// Like [`map_indexed`] but stops at the lowest-index error.
pub fn try_map_indexed<T, F>(mode: Execution, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(mode, n, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
    match thread_cap() {
        Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let _ = thread_cap();
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(Execution::Sequential, 100, |i| i * i);
        let par = map_indexed(Execution::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>> = try_map_indexed(Execution::Parallel, 10, |i| {
            if i >= 3 {
                Err(Error::InvalidParameter(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        match r {
            Err(Error::InvalidParameter(s)) => assert_eq!(s, "3"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
