use crate::error::{Error, Result};
use crate::fleet::Selection;

use super::{Counting, Objective, SolveResult, SolverId};

/// Largest N accepted by the exhaustive solver.
pub const EXHAUSTIVE_LIMIT: usize = 24;

/// Evaluates all `2^N` selections, including the empty one. Ties go to the
/// smallest bitmask.
pub fn solve_exhaustive<O: Objective + Sync + ?Sized>(oracle: &O) -> Result<SolveResult> {
    let n = oracle.n_centers();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooManyCenters {
            n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let (mask, value) = best_mask(oracle, n);
    Ok(SolveResult {
        selection: Selection::from_mask(n, mask),
        value,
        evaluations: 1u64 << n,
        solver: SolverId::Exhaustive,
        feasible: true,
        min_uv_sum: None,
    })
}

/// Exhaustive maximizer returning `(selection, value)`; no size guard.
pub fn exhaustive_argmax<O: Objective + Sync + ?Sized>(oracle: &O) -> (Selection, f64) {
    let n = oracle.n_centers();
    let (mask, value) = best_mask(oracle, n);
    (Selection::from_mask(n, mask), value)
}

fn scan<O: Objective + ?Sized>(oracle: &O, n: usize, range: std::ops::Range<u64>) -> (u64, f64, u64) {
    let counting = Counting::new(oracle);
    let mut best = (range.start, f64::NEG_INFINITY);
    for mask in range {
        let v = counting.eval(&Selection::from_mask(n, mask));
        if v > best.1 {
            best = (mask, v);
        }
    }
    (best.0, best.1, counting.calls())
}

fn merge(a: (u64, f64), b: (u64, f64)) -> (u64, f64) {
    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
        b
    } else {
        a
    }
}

#[cfg(feature = "parallel")]
fn best_mask<O: Objective + Sync + ?Sized>(oracle: &O, n: usize) -> (u64, f64) {
    use rayon::prelude::*;
    let total = 1u64 << n;
    if n < 14 {
        let (m, v, _) = scan(oracle, n, 0..total);
        return (m, v);
    }
    let chunk = 1u64 << 10;
    (0..total / chunk)
        .into_par_iter()
        .map(|c| {
            let (m, v, _) = scan(oracle, n, c * chunk..(c + 1) * chunk);
            (m, v)
        })
        .reduce(|| (u64::MAX, f64::NEG_INFINITY), merge)
}

#[cfg(not(feature = "parallel"))]
fn best_mask<O: Objective + Sync + ?Sized>(oracle: &O, n: usize) -> (u64, f64) {
    let (m, v, _) = scan(oracle, n, 0..1u64 << n);
    let _ = merge;
    (m, v)
}
