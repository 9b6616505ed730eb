//! Replication-level parallelism with schedule-independent results.
//!
//! Floating-point sums depend on association order, so replications are grouped into
//! fixed-size chunks: each chunk is summed sequentially and the chunk totals are added in
//! chunk order. The partition depends only on the replication count, never on the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::Result;

const CHUNK: usize = 256;

/// Ordered parallel map over `0..n`.
pub fn map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Elementwise sum of `f(rep)` over `0..reps`, each a vector of length `width`.
pub fn sum<F>(reps: usize, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    let chunks = reps.div_ceil(CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for rep in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                let v = f(rep)?;
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; width];
    for p in partial {
        for (a, x) in total.iter_mut().zip(&p) {
            *a += x;
        }
    }
    Ok(total)
}
