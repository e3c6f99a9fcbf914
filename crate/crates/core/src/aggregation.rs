//! Server-side combination of client updates: plain averaging plus the
//! robust alternatives (coordinate median, trimmed mean, Multi-Krum).
//!
//! All rules are insensitive to input ordering: updates arrive keyed by
//! client id and Multi-Krum breaks score ties by ascending id.

use crate::params::{ClientId, ParamVector};
use crate::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};

/// Aggregation rule selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationRule {
    Mean,
    CoordMedian,
    /// Per coordinate, drop the `trim` smallest and `trim` largest values,
    /// then average the rest. Requires `2 * trim < N`.
    TrimmedMean { trim: usize },
    /// Select the `m` updates with the lowest Krum scores assuming up to `f`
    /// attackers, then average them. Requires `N - f - 2 >= 1` and
    /// `1 <= m <= N - f`.
    MultiKrum { f: usize, m: usize },
}

impl std::fmt::Display for AggregationRule {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AggregationRule::Mean => write!(out, "mean"),
            AggregationRule::CoordMedian => write!(out, "coord_median"),
            AggregationRule::TrimmedMean { trim } => write!(out, "trimmed_mean({trim})"),
            AggregationRule::MultiKrum { f, m } => write!(out, "multi_krum({f},{m})"),
        }
    }
}

/// Result of one aggregation: the combined vector plus which clients were
/// averaged in and which the rule rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationOutcome {
    pub aggregate: ParamVector,
    pub contributors: BTreeSet<ClientId>,
    pub rejected: BTreeSet<ClientId>,
}

fn check_inputs(updates: &BTreeMap<ClientId, ParamVector>) -> Result<usize> {
    let mut dims = updates.values().map(|u| u.len());
    let Some(d) = dims.next() else {
        return Err(Error::EmptyUpdateSet);
    };
    for other in dims {
        if other != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: other,
            });
        }
    }
    Ok(d)
}

fn mean_of(vectors: Vec<&ParamVector>) -> ParamVector {
    let d = vectors[0].len();
    let mut sum = vec![0.0; d];
    for v in &vectors {
        for (s, x) in sum.iter_mut().zip(v.values()) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    ParamVector::new(sum.into_iter().map(|s| s / n).collect())
        .expect("mean of finite vectors is finite")
}

/// Sorted values of coordinate `j` across all updates.
fn column_sorted(updates: &BTreeMap<ClientId, ParamVector>, j: usize) -> Vec<f64> {
    let mut column: Vec<f64> = updates.values().map(|u| u.values()[j]).collect();
    column.sort_by(|a, b| a.partial_cmp(b).expect("entries are finite"));
    column
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Combines the updates under `rule`.
pub fn aggregate(
    updates: &BTreeMap<ClientId, ParamVector>,
    rule: AggregationRule,
) -> Result<AggregationOutcome> {
    let d = check_inputs(updates)?;
    let n = updates.len();
    let everyone: BTreeSet<ClientId> = updates.keys().copied().collect();
    match rule {
        AggregationRule::Mean => Ok(AggregationOutcome {
            aggregate: mean_of(updates.values().collect()),
            contributors: everyone,
            rejected: BTreeSet::new(),
        }),
        AggregationRule::CoordMedian => {
            let values: Vec<f64> = (0..d)
                .map(|j| median_of_sorted(&column_sorted(updates, j)))
                .collect();
            Ok(AggregationOutcome {
                aggregate: ParamVector::new(values).expect("medians of finite values"),
                contributors: everyone,
                rejected: BTreeSet::new(),
            })
        }
        AggregationRule::TrimmedMean { trim } => {
            if 2 * trim >= n {
                return Err(Error::RuleInfeasible(format!(
                    "trimmed mean with trim {trim} needs more than {} updates, got {n}",
                    2 * trim
                )));
            }
            let values: Vec<f64> = (0..d)
                .map(|j| {
                    let sorted = column_sorted(updates, j);
                    let kept = &sorted[trim..n - trim];
                    kept.iter().sum::<f64>() / kept.len() as f64
                })
                .collect();
            Ok(AggregationOutcome {
                aggregate: ParamVector::new(values).expect("trimmed means of finite values"),
                contributors: everyone,
                rejected: BTreeSet::new(),
            })
        }
        AggregationRule::MultiKrum { f, m } => multi_krum(updates, f, m),
    }
}

/// Multi-Krum selection: score each update by the sum of squared distances
/// to its `N - f - 2` nearest other updates, select the `m` lowest-scoring
/// (ties by ascending client id), and average the selected.
pub fn multi_krum(
    updates: &BTreeMap<ClientId, ParamVector>,
    f: usize,
    m: usize,
) -> Result<AggregationOutcome> {
    check_inputs(updates)?;
    let n = updates.len();
    let neighbors = n
        .checked_sub(f + 2)
        .filter(|&k| k >= 1)
        .ok_or_else(|| {
            Error::RuleInfeasible(format!(
                "multi-krum with f {f} needs at least {} updates, got {n}",
                f + 3
            ))
        })?;
    if m < 1 || m > n - f {
        return Err(Error::RuleInfeasible(format!(
            "multi-krum selection count {m} must lie in 1..={}",
            n - f
        )));
    }

    let ids: Vec<ClientId> = updates.keys().copied().collect();
    let vectors: Vec<&ParamVector> = updates.values().collect();
    let mut scored: Vec<(f64, ClientId)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                vectors[i]
                    .values()
                    .iter()
                    .zip(vectors[j].values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("squared distances are finite"));
        let score: f64 = dists[..neighbors].iter().sum();
        scored.push((score, ids[i]));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite").then(a.1.cmp(&b.1)));

    let contributors: BTreeSet<ClientId> = scored[..m].iter().map(|&(_, id)| id).collect();
    let rejected: BTreeSet<ClientId> = scored[m..].iter().map(|&(_, id)| id).collect();
    let selected: Vec<&ParamVector> = updates
        .iter()
        .filter(|(id, _)| contributors.contains(id))
        .map(|(_, v)| v)
        .collect();
    Ok(AggregationOutcome {
        aggregate: mean_of(selected),
        contributors,
        rejected,
    })
}

/// Applies the aggregated update to the global parameters.
pub fn apply_global_update(theta: &ParamVector, agg: &ParamVector) -> Result<ParamVector> {
    theta.add(agg)
}

/// Per-coordinate variance of averaged noise: `sigma^2 / N`.
pub fn expected_agg_noise_variance(sigma: f64, n: usize) -> f64 {
    assert!(n >= 1, "at least one client required");
    sigma * sigma / n as f64
}
