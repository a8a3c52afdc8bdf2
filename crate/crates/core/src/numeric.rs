//! Order-insensitive floating-point reductions.
//!
//! Every sum that feeds a reported statistic goes through [`canonical_sum`],
//! which sorts its input before a pairwise reduction. The result is therefore
//! bit-identical under any permutation of the input, which is what lets the
//! protocol output stay bit-identical when groups or observations are
//! reordered.

/// Pairwise (cascade) summation in the given order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sum that depends only on the multiset of values, not their order.
pub fn canonical_sum(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    pairwise_sum(&sorted)
}

/// Sum of `f(x)` over `xs`, invariant to the order of `xs`.
pub fn canonical_sum_map(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut mapped: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    mapped.sort_unstable_by(f64::total_cmp);
    pairwise_sum(&mapped)
}

/// Mean and unbiased sample variance, computed two-pass in the given order.
///
/// Returns a variance of 0 for fewer than two values.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}
