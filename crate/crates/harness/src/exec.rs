//! Run scheduling: one task per seed, parallel when the feature allows.

/// How independent runs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

/// Map `f` over `items`, preserving order. Without the `parallel` feature,
/// `Exec::Parallel` falls back to a sequential loop.
pub fn map_runs<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync + Copy,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(|&x| f(x)).collect()
        }
        _ => items.iter().map(|&x| f(x)).collect(),
    }
}
