//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] runs on the rayon
//! global pool (or a dedicated pool of `threads` workers). Without it every
//! mode runs sequentially. Results are always returned in input order, so the
//! two paths give identical output for pure task functions.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    Serial,
    /// `threads == 0` uses the global pool.
    Parallel { threads: usize },
    #[default]
    Auto,
}

impl ExecMode {
    pub fn from_threads(k: usize) -> Self {
        if k <= 1 {
            ExecMode::Serial
        } else {
            ExecMode::Parallel { threads: k }
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, ExecMode::Serial)
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            ExecMode::Serial => items.iter().map(f).collect(),
            ExecMode::Auto | ExecMode::Parallel { threads: 0 } => items.par_iter().map(f).collect(),
            ExecMode::Parallel { threads } => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                Err(_) => items.par_iter().map(f).collect(),
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = mode;
        items.iter().map(f).collect()
    }
}

/// `map` over `0..n`.
pub fn map_range<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map(mode, &idx, |&i| f(i))
}
