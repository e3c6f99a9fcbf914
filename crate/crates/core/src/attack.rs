//! Adversarial client behaviors: training-data corruption (label flipping,
//! feature poisoning) applied to a shard before training, and update-level
//! manipulation (scaling, pure-noise submissions) applied at send time.
//!
//! Data attacks corrupt a seeded sample of exactly `floor(frac * n)` records.
//! Update attackers ignore the honest pipeline: they submit the manipulated
//! vector directly, with no perturbation or compression, because a
//! protocol-violating client cannot be trusted to run either.

use crate::model::DatasetShard;
use crate::params::{ClientId, ParamVector};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeSet;

/// What the attackers do.
#[derive(Clone, Debug, PartialEq)]
pub enum AttackVariant {
    None,
    /// Invert the labels of a `frac` sample of the shard.
    LabelFlip { frac: f64 },
    /// Shift the features of a `frac` sample by `target_shift` and force
    /// their labels to 1.
    DataPoison { frac: f64, target_shift: Vec<f64> },
    /// Submit the trained (and, when privacy is on, clipped) update scaled
    /// by `factor`.
    ScaleUpdate { factor: f64 },
    /// Submit pure Gaussian noise with per-coordinate standard deviation
    /// `sigma_a`, skipping training entirely.
    RandomUpdate { sigma_a: f64 },
}

impl AttackVariant {
    pub fn name(&self) -> &'static str {
        match self {
            AttackVariant::None => "none",
            AttackVariant::LabelFlip { .. } => "label_flip",
            AttackVariant::DataPoison { .. } => "data_poison",
            AttackVariant::ScaleUpdate { .. } => "scale_update",
            AttackVariant::RandomUpdate { .. } => "random_update",
        }
    }
}

/// Attack variant plus the clients that carry it out.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub variant: AttackVariant,
    pub attacker_ids: BTreeSet<ClientId>,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            variant: AttackVariant::None,
            attacker_ids: BTreeSet::new(),
        }
    }

    pub fn is_attacker(&self, client: ClientId) -> bool {
        !matches!(self.variant, AttackVariant::None) && self.attacker_ids.contains(&client)
    }
}

/// In-flight tampering applied by the transport adversary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TamperRule {
    /// Payload byte offset to overwrite.
    pub index: usize,
    /// Replacement byte value.
    pub value: u8,
}

/// Network-level adversary: drops envelopes, tampers with payload bytes in
/// flight, and replays the previous round's envelopes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportAdversary {
    pub drop_prob: f64,
    pub tamper: Option<TamperRule>,
    pub replay: bool,
}

impl TransportAdversary {
    pub fn inactive() -> Self {
        TransportAdversary {
            drop_prob: 0.0,
            tamper: None,
            replay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.drop_prob.is_finite() || !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::config("transport.drop_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn sample_size(frac: f64, n: usize) -> usize {
    (frac * n as f64 + 1e-9).floor() as usize
}

fn sampled_rows(n: usize, count: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    rand::seq::index::sample(rng, n, count).into_vec()
}

/// Inverts the labels of a seeded sample of `floor(frac * n)` records.
pub fn flip_labels(shard: &DatasetShard, frac: f64, rng: &mut ChaCha12Rng) -> DatasetShard {
    assert!((0.0..=1.0).contains(&frac), "flip fraction must lie in [0, 1]");
    let mut out = shard.clone();
    for i in sampled_rows(shard.n(), sample_size(frac, shard.n()), rng) {
        out.set_label(i, 1 - shard.label(i));
    }
    out
}

/// Shifts the features of a seeded sample of `floor(frac * n)` records by
/// `target_shift` and forces their labels to 1.
pub fn poison_data(
    shard: &DatasetShard,
    frac: f64,
    target_shift: &[f64],
    rng: &mut ChaCha12Rng,
) -> Result<DatasetShard> {
    assert!((0.0..=1.0).contains(&frac), "poison fraction must lie in [0, 1]");
    if target_shift.len() != shard.d() {
        return Err(Error::DimensionMismatch {
            expected: shard.d(),
            got: target_shift.len(),
        });
    }
    let mut out = shard.clone();
    for i in sampled_rows(shard.n(), sample_size(frac, shard.n()), rng) {
        out.shift_row(i, target_shift);
        out.set_label(i, 1);
    }
    Ok(out)
}

/// Scales every coordinate by `factor`.
pub fn scale_update(delta: &ParamVector, factor: f64) -> ParamVector {
    delta.scaled(factor)
}

/// Draws an i.i.d. Gaussian vector with per-coordinate standard deviation
/// `sigma_a`.
pub fn random_update(d: usize, sigma_a: f64, rng: &mut ChaCha12Rng) -> ParamVector {
    assert!(d >= 1, "dimension must be positive");
    let values: Vec<f64> = (0..d)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            sigma_a * g
        })
        .collect();
    ParamVector::new(values).expect("scaled normals are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    fn shard() -> DatasetShard {
        let features: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        DatasetShard::new(features, 2, labels).unwrap()
    }

    #[test]
    fn zero_fraction_flips_nothing() {
        let s = shard();
        assert_eq!(flip_labels(&s, 0.0, &mut derive_rng(1, "flip", &[])), s);
    }

    #[test]
    fn full_flip_is_an_involution() {
        let s = shard();
        let once = flip_labels(&s, 1.0, &mut derive_rng(2, "flip", &[]));
        assert!(once.labels().iter().zip(s.labels()).all(|(a, b)| a != b));
        let twice = flip_labels(&once, 1.0, &mut derive_rng(3, "flip", &[]));
        assert_eq!(twice, s);
    }

    #[test]
    fn half_flip_changes_exactly_half() {
        let s = shard();
        let flipped = flip_labels(&s, 0.5, &mut derive_rng(4, "flip", &[]));
        let differing = flipped
            .labels()
            .iter()
            .zip(s.labels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(differing, 5);
    }

    #[test]
    fn poison_count_contract() {
        let s = shard();
        let poisoned = poison_data(&s, 0.3, &[5.0, 5.0], &mut derive_rng(5, "poison", &[])).unwrap();
        let shifted = (0..s.n()).filter(|&i| poisoned.row(i) != s.row(i)).count();
        assert_eq!(shifted, 3);
        assert!((0..s.n())
            .filter(|&i| poisoned.row(i) != s.row(i))
            .all(|i| poisoned.label(i) == 1));
        let zero_frac = poison_data(&s, 0.0, &[5.0, 5.0], &mut derive_rng(5, "poison", &[])).unwrap();
        assert_eq!(zero_frac, s);
        let zero_shift_all =
            poison_data(&s, 1.0, &[0.0, 0.0], &mut derive_rng(6, "poison", &[])).unwrap();
        assert!(zero_shift_all.labels().iter().all(|&y| y == 1));
        assert!((0..s.n()).all(|i| zero_shift_all.row(i) == s.row(i)));
    }

    #[test]
    fn poison_shifts_features() {
        let s = shard();
        let poisoned = poison_data(&s, 1.0, &[10.0, -1.0], &mut derive_rng(7, "poison", &[])).unwrap();
        for i in 0..s.n() {
            assert_eq!(poisoned.row(i)[0], s.row(i)[0] + 10.0);
            assert_eq!(poisoned.row(i)[1], s.row(i)[1] - 1.0);
        }
    }

    #[test]
    fn poison_rejects_wrong_shift_dimension() {
        assert!(matches!(
            poison_data(&shard(), 0.5, &[1.0], &mut derive_rng(8, "poison", &[])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scale_update_multiplies() {
        let v = ParamVector::new(vec![1.0, -2.0]).unwrap();
        assert_eq!(scale_update(&v, 50.0).values(), &[50.0, -100.0]);
        assert_eq!(scale_update(&v, 1.0), v);
        assert_eq!(scale_update(&v, 0.0), ParamVector::zeros(2));
    }

    #[test]
    fn random_update_is_seeded_and_scaled() {
        let a = random_update(100, 1.0, &mut derive_rng(9, "rand", &[]));
        let b = random_update(100, 1.0, &mut derive_rng(9, "rand", &[]));
        assert_eq!(a, b);
        let tiny = random_update(100, 1e-15, &mut derive_rng(9, "rand", &[]));
        assert!(tiny.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn random_update_std_concentrates() {
        let v = random_update(10_000, 1.0, &mut derive_rng(10, "rand", &[]));
        let mean: f64 = v.values().iter().sum::<f64>() / v.len() as f64;
        let var: f64 =
            v.values().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
        assert!((0.97..=1.03).contains(&var.sqrt()), "std {}", var.sqrt());
    }

    #[test]
    fn attacks_are_deterministic_per_seed() {
        let s = shard();
        let a = flip_labels(&s, 0.4, &mut derive_rng(11, "flip", &[2]));
        let b = flip_labels(&s, 0.4, &mut derive_rng(11, "flip", &[2]));
        assert_eq!(a, b);
        let c = flip_labels(&s, 0.4, &mut derive_rng(11, "flip", &[3]));
        assert_ne!(a, c);
    }
}
