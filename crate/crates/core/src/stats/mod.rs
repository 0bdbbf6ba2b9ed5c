//! Repeated-trial statistics: medians, Mann-Whitney U and Vargha-Delaney A12.

pub mod experiment;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub use experiment::{
    compare, run_experiment, Benchmark, ExperimentOptions, ExperimentResult, RunRecord, TrialKey, TrialMatrix,
};

/// Significance threshold for reports.
pub const SIGNIFICANCE: f64 = 0.05;

/// Samples of at most this many values each get an exact p in [`mann_whitney_u`].
pub const EXACT_LIMIT: usize = 12;

/// Median; the mean of the two middle values for even counts.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of an empty sample");
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Mid-ranks (1-based) of `values`, ties sharing the mean of their positions.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// `U` of the first sample: pairs `(x, y)` with `x > y`, ties counting one half.
fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided p from the exact permutation distribution of the first
/// sample's rank sum, counted by dynamic programming over doubled mid-ranks.
pub fn mann_whitney_u_exact(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks: Vec<usize> = mid_ranks(&pooled).iter().map(|r| (r * 2.0).round() as usize).collect();
    let (n_a, n) = (a.len(), pooled.len());
    let max_sum: usize = ranks.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0f64; max_sum + 1]; n_a + 1];
    ways[0][0] = 1.0;
    for &r in &ranks {
        for k in (1..=n_a).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            for s in (r..=max_sum).rev() {
                upper[0][s] += lower[k - 1][s - r];
            }
        }
    }
    let mean = n_a * (n + 1);
    let observed: usize = ranks[..n_a].iter().sum();
    let threshold = observed.abs_diff(mean);
    let total: f64 = ways[n_a].iter().sum();
    let extreme: f64 = ways[n_a].iter().enumerate().filter(|(s, _)| s.abs_diff(mean) >= threshold).map(|(_, w)| w).sum();
    (extreme / total).min(1.0)
}

/// Two-sided p via the normal approximation with tie and continuity corrections.
pub fn mann_whitney_u_normal(a: &[f64], b: &[f64]) -> f64 {
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let n = n_a + n_b;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = n_a * n_b / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let u = u_statistic(a, b);
    let diff = (u - n_a * n_b / 2.0).abs();
    let z = (diff - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Two-sided Mann-Whitney U test p-value.
///
/// Exact when neither sample holds more than [`EXACT_LIMIT`] values, the
/// normal approximation otherwise. Identical values across
/// both samples give p = 1.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "Mann-Whitney U needs two non-empty samples");
    let first = a[0];
    if a.iter().chain(b).all(|&v| v == first) {
        return 1.0;
    }
    if a.len() <= EXACT_LIMIT && b.len() <= EXACT_LIMIT {
        mann_whitney_u_exact(a, b)
    } else {
        mann_whitney_u_normal(a, b)
    }
}

/// Vargha-Delaney A12: probability that a value from `a` is smaller than one
/// from `b`, ties counting one half. Smaller means faster here.
pub fn a12(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "A12 needs two non-empty samples");
    let mut score = 0.0;
    for &x in a {
        for &y in b {
            if x < y {
                score += 1.0;
            } else if x == y {
                score += 0.5;
            }
        }
    }
    score / (a.len() * b.len()) as f64
}

/// One line of a comparison table between configurations X and Y.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub benchmark: String,
    pub target: String,
    pub config_x: String,
    pub config_y: String,
    pub t_x: f64,
    pub t_y: f64,
    /// `t_x / t_y`, with both medians floored at one execution.
    pub speedup: f64,
    pub p_value: f64,
    pub a12_x: f64,
    pub a12_y: f64,
}

impl ComparisonRow {
    pub fn new(
        benchmark: &str,
        target: &str,
        (config_x, x): (&str, &[f64]),
        (config_y, y): (&str, &[f64]),
    ) -> ComparisonRow {
        let t_x = median(x);
        let t_y = median(y);
        ComparisonRow {
            benchmark: benchmark.to_string(),
            target: target.to_string(),
            config_x: config_x.to_string(),
            config_y: config_y.to_string(),
            t_x,
            t_y,
            speedup: t_x.max(1.0) / t_y.max(1.0),
            p_value: mann_whitney_u(x, y),
            a12_x: a12(x, y),
            a12_y: a12(y, x),
        }
    }

    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }
}
