//! Data-parallel helpers that fall back to sequential iteration when the
//! `parallel` feature is off. Results never depend on the schedule: maps keep
//! input order and reductions must be associative and commutative.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Maps then folds with `combine`, starting from `identity()`.
pub fn map_reduce<T, R, F, I, C>(items: Vec<T>, f: F, identity: I, combine: C) -> R
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
    I: Fn() -> R + Sync + Send,
    C: Fn(R, R) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).reduce(identity, combine)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).fold(identity(), combine)
    }
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
