//! Data-parallel map with a sequential fallback.
//!
//! Batch work (per-video pipeline chains, per-item evaluation, per-context
//! question generation) goes through [`map_ordered`]. With the `parallel`
//! feature the parallel path runs on the rayon pool; without it every call is
//! sequential. Output order always matches input order.
//!
//! Most batch work waits on model backends rather than the CPU, so the pool
//! is sized to at least the gateway's default in-flight limit even on
//! machines with fewer cores.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether `Parallel` actually runs in parallel in this build.
    pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");
}

#[cfg(feature = "parallel")]
static POOL: std::sync::LazyLock<rayon::ThreadPool> = std::sync::LazyLock::new(|| {
    let cores = std::thread::available_parallelism().map_or(1, usize::from);
    rayon::ThreadPoolBuilder::new()
        .num_threads(cores.max(crate::gateway::DEFAULT_MAX_IN_FLIGHT))
        .thread_name(|i| format!("nepkit-{i}"))
        .build()
        .expect("thread pool")
});

pub fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            POOL.install(|| items.par_iter().map(f).collect())
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved_in_both_modes() {
        let input: Vec<u64> = (0..1000).collect();
        let seq = map_ordered(&input, Execution::Sequential, |x| x * x);
        let par = map_ordered(&input, Execution::Parallel, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 999 * 999);
    }
}
