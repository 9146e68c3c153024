//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every call runs sequentially. Results always come back in input
//! order, so reductions over them are identical in both modes.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{param, Error};

/// Environment variable that sets the worker count of the global pool.
pub const THREADS_ENV: &str = "BRANCHLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// The mode actually used, taking the compiled features into account.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

impl FromStr for Execution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sequential" | "seq" => Ok(Execution::Sequential),
            "parallel" | "par" => Ok(Execution::Parallel),
            _ => Err(param(format!("unknown execution mode '{s}'"))),
        }
    }
}

/// `items.map(f)` in input order.
pub fn map<T, R, F>(mode: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match mode.effective() {
        Execution::Sequential => items.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!("effective() never yields Parallel without the feature"),
    }
}

/// Sizes the global rayon pool from `BRANCHLAB_THREADS` if set.
///
/// Returns the configured count. Calling it after the pool has been built is
/// harmless; the existing pool is kept.
pub fn init_threads_from_env() -> Result<Option<usize>, Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| param(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    if n == 0 {
        return Err(param(format!("{THREADS_ENV} must be positive")));
    }
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(Some(n))
}
