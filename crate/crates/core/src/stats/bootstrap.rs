// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mean, median, quantile_sorted};
use crate::error::{LabError, Result};
use crate::exec::Exec;

pub const MIN_REPLICATES: usize = 100;

labeled_enum! {
    Statistic {
        Mean => "mean",
        Median => "median",
    }
}

impl Statistic {
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        match self {
            Statistic::Mean => mean(values),
            Statistic::Median => median(values),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    pub replicates: usize,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Percentile bootstrap 95% interval. Replicate `k` draws from its own ChaCha
/// stream (`seed`, stream `k`), so the result is independent of [`Exec`].
pub fn bootstrap_ci(
    deltas: &[f64],
    statistic: Statistic,
    replicates: usize,
    seed: u64,
    exec: Exec,
) -> Result<Interval> {
    if deltas.is_empty() {
        return Err(LabError::InsufficientData("bootstrap over an empty sample".into()));
    }
    if replicates < MIN_REPLICATES {
        return Err(LabError::Invalid(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let n = deltas.len();
    let mut stats = exec.map_range(replicates, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let sample: Vec<f64> = (0..n).map(|_| deltas[rng.random_range(0..n)]).collect();
        statistic.apply(&sample).expect("nonempty resample")
    });
    stats.sort_by(f64::total_cmp);
    Ok(Interval {
        estimate: statistic.apply(deltas).expect("nonempty sample"),
        low: quantile_sorted(&stats, 0.025),
        high: quantile_sorted(&stats, 0.975),
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_deterministic() {
        let ci = bootstrap_ci(&[5.0; 4], Statistic::Mean, 200, 1, Exec::Sequential).unwrap();
        assert_eq!((ci.low, ci.high), (5.0, 5.0));
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        for stat in Statistic::ALL {
            let a = bootstrap_ci(&x, *stat, 300, 9, Exec::Sequential).unwrap();
            let b = bootstrap_ci(&x, *stat, 300, 9, Exec::Parallel).unwrap();
            assert_eq!(a, b);
            assert!(a.low <= a.estimate && a.estimate <= a.high);
        }
    }

    #[test]
    fn argument_errors() {
        assert!(bootstrap_ci(&[], Statistic::Mean, 200, 1, Exec::Sequential).is_err());
        assert!(bootstrap_ci(&[1.0], Statistic::Mean, 99, 1, Exec::Sequential).is_err());
    }
}
