//! Data-parallel batch mapping with a sequential fallback.
//!
//! The training loops are embarrassingly parallel across batch elements:
//! each element builds its own computation graph against shared read-only
//! parameters. `map_batch` fans those out over rayon when the `parallel`
//! feature (default) is enabled. Results are collected in input order and
//! reduced sequentially, so outputs are bit-identical to the sequential
//! fallback regardless of thread scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when built with the `parallel` feature.
pub fn map_batch<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential variant, kept callable so benchmarks can compare the
/// two paths within a single build.
pub fn map_batch_seq<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let a = map_batch(&xs, |x| x.sin() * x.cos());
        let b = map_batch_seq(&xs, |x| x.sin() * x.cos());
        assert_eq!(a, b);
    }
}
