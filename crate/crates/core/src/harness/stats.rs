//! Two-sample rank test and summary statistics.

use serde::{Deserialize, Serialize};

/// Pooled sizes up to this use the exact null distribution.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs `(a, b)` with `a > b`, ties counting 1/2.
    pub u: f64,
    /// Two-sided.
    pub p_value: f64,
    pub exact: bool,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("both samples must be nonempty")]
pub struct EmptySample;

/// Midranks (1-based) of the pooled values.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    ranks
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Mann-Whitney U test with midranks for ties. Exact when the pooled
/// size is at most [`EXACT_LIMIT`], otherwise the normal approximation
/// with tie-corrected variance and continuity correction. Identical
/// pooled values give `p = 1`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, EmptySample> {
    if a.is_empty() || b.is_empty() {
        return Err(EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;
    if pooled.iter().all(|&x| x == pooled[0]) {
        return Ok(MannWhitney { u, p_value: 1.0, exact: n <= EXACT_LIMIT });
    }
    if n <= EXACT_LIMIT {
        // doubled midranks are integers; count subsets of size na by
        // doubled rank sum
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut ways = vec![vec![0.0f64; max_sum + 1]; na + 1];
        ways[0][0] = 1.0;
        for &d in &doubled {
            for k in (1..=na).rev() {
                for s in (d..=max_sum).rev() {
                    ways[k][s] += ways[k - 1][s - d];
                }
            }
        }
        let total: f64 = ways[na].iter().sum();
        // doubled expected rank sum: na (n + 1)
        let centre = (na * (n + 1)) as i64;
        let observed = ((2.0 * rank_sum).round() as i64 - centre).abs();
        let extreme: f64 =
            ways[na].iter().enumerate().filter(|(s, _)| (*s as i64 - centre).abs() >= observed).map(|(_, w)| w).sum();
        return Ok(MannWhitney { u, p_value: (extreme / total).min(1.0), exact: true });
    }
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
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let variance = naf * nbf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let z = ((u - naf * nbf / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    Ok(MannWhitney { u, p_value: (2.0 * normal_sf(z)).min(1.0), exact: false })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}
