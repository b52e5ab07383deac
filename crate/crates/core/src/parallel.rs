//! Ordered parallel maps. Results come back in index order, so any reduction
//! done afterwards is independent of the thread count.

use rayon::prelude::*;

pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
