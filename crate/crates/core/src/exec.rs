//! Trial-level parallelism.
//!
//! Work items are mapped independently and collected in input order, so a
//! parallel run reduces exactly like a sequential one. Without the
//! `parallel` feature both modes run sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether `Parallel` actually fans out in this build.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

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
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..500).collect();
        let f = |x: &u64| (*x as f64).sqrt().sin();
        let a = map_ordered(&items, Execution::Parallel, f);
        let b = map_ordered(&items, Execution::Sequential, f);
        assert_eq!(a, b);
        assert_eq!(a[7], (7.0f64).sqrt().sin());
    }
}
