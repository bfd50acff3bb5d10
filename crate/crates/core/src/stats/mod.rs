// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear models with HC3 covariance, correlation, and bootstrap intervals.

mod bootstrap;
mod corr;
mod design;
mod models;
mod ols;
mod spec;

pub use bootstrap::{bootstrap_ci, Interval, Statistic};
pub use corr::pearson_r;
pub use design::{build_design, Design};
pub use models::{
    condition_regression, projection_behavior_regression, within_pair_table, PairLevel,
};
pub use ols::{fit_matrix, fit_ols_hc3, Coefficient, RegressionResult, COEFFICIENT_HEADER, Z95};
pub use spec::{Factor, Outcome, RegressionSpec, Term};

/// Arithmetic mean, `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Median; an even count takes the midpoint of the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
