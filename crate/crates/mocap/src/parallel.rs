//! Data-parallel fan-out with a sequential fallback.
//!
//! Per-frame and per-batch stages map independent work items through
//! [`map_items`]. With the `parallel` feature enabled the map runs on rayon
//! whenever more than one worker is requested; otherwise (feature disabled,
//! or `workers == 1`) it runs sequentially in index order. Results are
//! always collected in input order, so a run is deterministic for any
//! worker count as long as the per-item work is.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Worker configuration for the fan-out stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Sequential execution in index order.
    Sequential,
    /// Use rayon with the given number of worker threads (0 = rayon default).
    Workers(usize),
}

impl Parallelism {
    pub fn from_workers(workers: usize) -> Self {
        if workers == 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Workers(workers)
        }
    }

    fn is_sequential(self) -> bool {
        matches!(self, Parallelism::Sequential | Parallelism::Workers(1))
    }
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Workers(0)
    }
}

/// Maps `f` over `items`, in parallel when requested and compiled in.
pub fn map_items<T, R, F>(par: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indexed(par, items.len(), |i| f(&items[i]))
}

/// Index-driven variant of [`map_items`] for stages that produce work from
/// an index rather than a slice element.
pub fn map_indexed<R, F>(par: Parallelism, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !par.is_sequential() {
            if let Parallelism::Workers(n) = par {
                if n > 1 {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .expect("failed to build worker pool");
                    return pool.install(|| (0..len).into_par_iter().map(f).collect());
                }
            }
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    let _ = &par;
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let items: Vec<usize> = (0..257).collect();
        let seq = map_items(Parallelism::Sequential, &items, |i| i * 3);
        let par = map_items(Parallelism::Workers(4), &items, |i| i * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[10], 30);
    }
}
