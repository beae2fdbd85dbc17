//! Deterministic reductions.
//!
//! Every sum over grid points in this crate goes through [`pairwise_sum_by`]:
//! the index range is split in halves recursively until a block holds at most
//! [`LEAF`] terms, which are then added left to right. The tree depends only on
//! the length of the range, so results are bit-identical between runs.

/// Largest block summed sequentially.
pub const LEAF: usize = 16;

/// Pairwise (tree) sum of `term(i)` for `i` in `0..n`.
pub fn pairwise_sum_by<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64,
{
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        let len = hi - lo;
        if len <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + len / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, n, &term)
}

/// Pairwise sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i])
}

/// Real inner product of two equally long slices, pairwise-summed.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i] * b[i])
}
