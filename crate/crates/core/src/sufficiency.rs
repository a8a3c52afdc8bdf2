//! Statistics driving each factor: group means, `(sum, sum of squares)` of
//! the means, and observed residuals.
//!
//! Sums use [`canonical_sum`], so results are bit-identical under any
//! reordering of groups or of observations within a group.

use crate::error::Result;
use crate::model::{GroupedDataset, HyperStat, SufficientStat};
use crate::numeric::canonical_sum;

pub fn compute_t(data: &GroupedDataset) -> SufficientStat {
    let n = data.per_group() as f64;
    let means = data
        .values()
        .iter()
        .map(|row| canonical_sum(row) / n)
        .collect();
    SufficientStat::new(means).expect("validated dataset yields finite means")
}

pub fn compute_v(t: &SufficientStat) -> Result<HyperStat> {
    HyperStat::from_means(t.means())
}

pub fn compute_residuals(data: &GroupedDataset, t: &SufficientStat) -> Vec<Vec<f64>> {
    data.values()
        .iter()
        .zip(t.means())
        .map(|(row, &m)| row.iter().map(|&x| x - m).collect())
        .collect()
}
