//! Data-parallel primitives with a sequential fallback.
//!
//! With the `parallel` feature (the default) this re-exports rayon's
//! iterator traits and `join`, so hot loops fan out across a thread pool.
//! Without it, the same call sites compile against plain sequential
//! iterators. Only the small surface the crate actually uses is shimmed.
//!
//! Every parallelized computation in this crate is element-independent
//! (no floating-point reductions across threads), so results are
//! bit-identical between the two builds.

#[cfg(feature = "parallel")]
pub use rayon::iter::{IndexedParallelIterator, IntoParallelIterator, ParallelIterator};

#[cfg(feature = "parallel")]
pub use rayon::join;

#[cfg(not(feature = "parallel"))]
mod fallback {
    /// Sequential stand-in for rayon's `IntoParallelIterator`.
    pub trait IntoParallelIterator: Sized {
        type Iter: Iterator<Item = Self::Item>;
        type Item;

        fn into_par_iter(self) -> Self::Iter;
    }

    impl IntoParallelIterator for std::ops::Range<usize> {
        type Iter = std::ops::Range<usize>;
        type Item = usize;

        fn into_par_iter(self) -> Self::Iter {
            self
        }
    }

    impl<T> IntoParallelIterator for Vec<T> {
        type Iter = std::vec::IntoIter<T>;
        type Item = T;

        fn into_par_iter(self) -> Self::Iter {
            self.into_iter()
        }
    }

    /// Runs both closures on the current thread.
    pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA,
        B: FnOnce() -> RB,
    {
        (a(), b())
    }
}

#[cfg(not(feature = "parallel"))]
pub use fallback::{join, IntoParallelIterator};
