//! Synthetic binary-classification data and non-IID partitioning.
//!
//! The population is a two-class spherical Gaussian mixture: labels are
//! Bernoulli(`positive_frac`) and features are drawn around the class means
//! `+/- (class_sep/2) * u` for the fixed unit direction `u = (1, 0, ..., 0)`.
//! Partitioning uses Dirichlet(`alpha`) label skew: for each class, client
//! proportions are drawn from a symmetric Dirichlet and records are assigned
//! by largest-remainder quotas, so small `alpha` yields heterogeneous shards
//! and large `alpha` approaches a uniform split.

use crate::model::DatasetShard;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::io::Write;

/// Shape of the synthetic population.
#[derive(Clone, Copy, Debug)]
pub struct PopulationSpec {
    n_total: usize,
    d: usize,
    class_sep: f64,
    positive_frac: f64,
}

impl PopulationSpec {
    pub fn new(n_total: usize, d: usize, class_sep: f64, positive_frac: f64) -> Result<Self> {
        if n_total < 1 {
            return Err(Error::config("population.n_total", "must be at least 1"));
        }
        if d < 1 {
            return Err(Error::config("population.d", "must be at least 1"));
        }
        if !class_sep.is_finite() || class_sep <= 0.0 {
            return Err(Error::config("population.class_sep", "must be positive"));
        }
        if !positive_frac.is_finite() || positive_frac <= 0.0 || positive_frac >= 1.0 {
            return Err(Error::config(
                "population.positive_frac",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(PopulationSpec {
            n_total,
            d,
            class_sep,
            positive_frac,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn class_sep(&self) -> f64 {
        self.class_sep
    }

    pub fn positive_frac(&self) -> f64 {
        self.positive_frac
    }
}

/// Shape of the client partition.
#[derive(Clone, Copy, Debug)]
pub struct PartitionSpec {
    n_clients: usize,
    dirichlet_alpha: f64,
    min_shard: usize,
}

impl PartitionSpec {
    pub fn new(n_clients: usize, dirichlet_alpha: f64, min_shard: usize) -> Result<Self> {
        if n_clients < 1 {
            return Err(Error::config("partition.n_clients", "must be at least 1"));
        }
        if !dirichlet_alpha.is_finite() || dirichlet_alpha <= 0.0 {
            return Err(Error::config(
                "partition.dirichlet_alpha",
                "must be positive",
            ));
        }
        Ok(PartitionSpec {
            n_clients,
            dirichlet_alpha,
            min_shard,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn dirichlet_alpha(&self) -> f64 {
        self.dirichlet_alpha
    }

    pub fn min_shard(&self) -> usize {
        self.min_shard
    }
}

/// Draws the synthetic population; identical seeds give identical shards.
pub fn generate_population(spec: &PopulationSpec, rng: &mut ChaCha12Rng) -> DatasetShard {
    let n = spec.n_total();
    let d = spec.d();
    let half_sep = spec.class_sep() / 2.0;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(rng.random_bool(spec.positive_frac()));
        labels.push(y);
        let mean0 = if y == 1 { half_sep } else { -half_sep };
        for j in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(if j == 0 { mean0 + noise } else { noise });
        }
    }
    DatasetShard::new(features, d, labels).expect("generated data is well formed")
}

/// Draws one symmetric Dirichlet(alpha) proportion vector over `n` clients
/// as normalized Gamma(alpha, 1) variates.
fn dirichlet_proportions(alpha: f64, n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return vec![1.0 / n as f64; n];
    }
    draws.into_iter().map(|g| g / sum).collect()
}

/// Splits `count` records over clients proportionally to `p`, with exact
/// totals via the largest-remainder rule (ties to the lower client index).
fn quota_counts(p: &[f64], count: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(p.len());
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(p.len());
    let mut assigned = 0usize;
    for (i, &pi) in p.iter().enumerate() {
        let quota = pi * count as f64;
        let base = quota.floor() as usize;
        counts.push(base);
        assigned += base;
        fracs.push((quota - base as f64, i));
    }
    fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in fracs.iter().take(count - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Assigns every record index to exactly one client using Dirichlet label
/// skew; returns per-client ascending index lists.
pub fn partition_indices(
    labels: &[u8],
    part: &PartitionSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    let k = part.n_clients();
    if n == 0 {
        return Err(Error::InfeasiblePartition("no records to partition".into()));
    }
    if k > n {
        return Err(Error::InfeasiblePartition(format!(
            "{k} clients but only {n} records"
        )));
    }
    if k * part.min_shard() > n {
        return Err(Error::InfeasiblePartition(format!(
            "min_shard {} over {k} clients needs more than {n} records",
            part.min_shard()
        )));
    }

    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in 0..=1u8 {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let p = dirichlet_proportions(part.dirichlet_alpha(), k, rng);
        let counts = quota_counts(&p, members.len());
        members.shuffle(rng);
        let mut offset = 0;
        for (client, &c) in counts.iter().enumerate() {
            assignments[client].extend_from_slice(&members[offset..offset + c]);
            offset += c;
        }
    }

    // Top up deficient shards from the currently largest shard. Feasibility
    // was checked above, so a donor strictly above min_shard always exists.
    loop {
        let deficient = (0..k).find(|&c| assignments[c].len() < part.min_shard());
        let Some(needy) = deficient else { break };
        let donor = (0..k)
            .max_by_key(|&c| (assignments[c].len(), std::cmp::Reverse(c)))
            .expect("at least one client");
        if assignments[donor].len() <= part.min_shard() {
            return Err(Error::InfeasiblePartition(
                "cannot satisfy min_shard without emptying a donor".into(),
            ));
        }
        let moved = assignments[donor].pop().expect("donor nonempty");
        assignments[needy].push(moved);
    }

    for a in &mut assignments {
        a.sort_unstable();
    }
    Ok(assignments)
}

/// Partitions `data` into one shard per client (see [`partition_indices`]).
pub fn partition_non_iid(
    data: &DatasetShard,
    part: &PartitionSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DatasetShard>> {
    let indices = partition_indices(data.labels(), part, rng)?;
    Ok(indices.iter().map(|idx| data.select(idx)).collect())
}

/// Writes a shard as CSV with header `f0,...,f{d-1},label`; features are
/// printed with 9 significant digits.
pub fn write_csv<W: Write>(shard: &DatasetShard, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..shard.d()).map(|j| format!("f{j}")).collect();
    header.push("label".to_string());
    w.write_record(&header).map_err(io_of_csv)?;
    for i in 0..shard.n() {
        let mut rec: Vec<String> = shard.row(i).iter().map(|v| format!("{v:.8e}")).collect();
        rec.push(shard.label(i).to_string());
        w.write_record(&rec).map_err(io_of_csv)?;
    }
    w.flush()?;
    Ok(())
}

fn io_of_csv(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
