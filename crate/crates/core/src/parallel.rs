//! Deterministic parallel accumulation over sentences.

use rayon::prelude::*;

use crate::error::Result;

const MIN_CHUNK: usize = 32;
const MAX_PARTS: usize = 64;

/// Folds `0..n` in contiguous chunks on the rayon pool, then merges chunk
/// results sequentially in index order. Chunk boundaries depend only on `n`,
/// so the result does not depend on the number of worker threads.
pub(crate) fn chunked_fold<S, I, F, M>(n: usize, init: I, fold: F, merge: M) -> Result<S>
where
    S: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize) -> Result<()> + Sync,
    M: Fn(&mut S, S),
{
    let chunk = MIN_CHUNK.max(n.div_ceil(MAX_PARTS));
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let parts = starts
        .par_iter()
        .map(|&lo| {
            let mut acc = init();
            for i in lo..(lo + chunk).min(n) {
                fold(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<S>>>()?;
    let mut total = init();
    for part in parts {
        merge(&mut total, part);
    }
    Ok(total)
}
