//! Server-side defenses: robust anomaly detection on update norms, trust
//! scoring with threshold exclusion, and a per-round norm-statistics log.
//!
//! Detection uses median/MAD rather than mean/std so the statistic itself
//! resists poisoning: a handful of inflated norms moves neither the center
//! nor the spread.

use crate::params::{ClientId, ParamVector};
use std::collections::{BTreeMap, BTreeSet};

/// Scaling constant that makes MAD a consistent estimator of the standard
/// deviation under normality.
const MAD_CONSISTENCY: f64 = 0.6745;

/// Floor applied to the spread so identical norms yield zero scores instead
/// of a division blow-up.
const SPREAD_FLOOR: f64 = 1e-9;

/// Fewest updates from which medians are meaningful.
const MIN_UPDATES_FOR_DETECTION: usize = 3;

/// Why a client was flagged this round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyReason {
    None,
    NormOutlier,
    IntegrityFail,
    AuthFail,
}

/// Per-client detection outcome for one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnomalyVerdict {
    pub client_id: ClientId,
    pub robust_z: f64,
    pub flagged: bool,
    pub reason: AnomalyReason,
}

impl AnomalyVerdict {
    pub fn clean(client_id: ClientId, robust_z: f64) -> Self {
        AnomalyVerdict {
            client_id,
            robust_z,
            flagged: false,
            reason: AnomalyReason::None,
        }
    }

    pub fn flagged(client_id: ClientId, robust_z: f64, reason: AnomalyReason) -> Self {
        assert!(reason != AnomalyReason::None, "flagged verdicts need a reason");
        AnomalyVerdict {
            client_id,
            robust_z,
            flagged: true,
            reason,
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median and MAD of a set of values.
pub fn robust_center_spread(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "need at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("norms are finite"));
    let center = median(&sorted);
    let mut deviations: Vec<f64> = sorted.iter().map(|v| (v - center).abs()).collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).expect("deviations are finite"));
    (center, median(&deviations))
}

/// Flags updates whose L2 norm sits more than `tau` robust standard
/// deviations from the median norm. With fewer than three updates every
/// verdict is clean: medians of one or two points carry no information.
pub fn detect_anomalies(
    updates: &BTreeMap<ClientId, ParamVector>,
    tau: f64,
) -> Vec<AnomalyVerdict> {
    assert!(tau > 0.0, "threshold must be positive");
    let norms: Vec<(ClientId, f64)> =
        updates.iter().map(|(&c, u)| (c, u.l2_norm())).collect();
    if norms.len() < MIN_UPDATES_FOR_DETECTION {
        return norms
            .into_iter()
            .map(|(c, _)| AnomalyVerdict::clean(c, 0.0))
            .collect();
    }
    let values: Vec<f64> = norms.iter().map(|&(_, n)| n).collect();
    let (center, spread) = robust_center_spread(&values);
    let denom = spread.max(SPREAD_FLOOR);
    norms
        .into_iter()
        .map(|(c, n)| {
            let z = MAD_CONSISTENCY * (n - center).abs() / denom;
            if z > tau {
                AnomalyVerdict::flagged(c, z, AnomalyReason::NormOutlier)
            } else {
                AnomalyVerdict::clean(c, z)
            }
        })
        .collect()
}

/// Reward-and-penalty trust update, clamped to [0, 1]: unflagged clients
/// gain `alpha`, flagged clients lose `beta`.
pub fn update_trust(
    scores: &mut BTreeMap<ClientId, f64>,
    verdicts: &[AnomalyVerdict],
    alpha: f64,
    beta: f64,
) {
    assert!(alpha >= 0.0 && beta >= 0.0, "trust deltas must be nonnegative");
    for v in verdicts {
        let score = scores.entry(v.client_id).or_insert(0.0);
        *score = if v.flagged {
            (*score - beta).max(0.0)
        } else {
            (*score + alpha).min(1.0)
        };
    }
}

/// Clients whose trust is at least `theta_min`.
pub fn eligible_clients(scores: &BTreeMap<ClientId, f64>, theta_min: f64) -> BTreeSet<ClientId> {
    scores
        .iter()
        .filter(|&(_, &s)| s >= theta_min)
        .map(|(&c, _)| c)
        .collect()
}

/// Robust norm statistics of one round's received updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundNormStats {
    pub round: u64,
    pub center: f64,
    pub spread: f64,
    pub count: usize,
}

/// Append-only log of per-round norm statistics.
#[derive(Clone, Debug, Default)]
pub struct UpdateStats {
    rounds: Vec<RoundNormStats>,
}

impl UpdateStats {
    pub fn new() -> Self {
        UpdateStats::default()
    }

    /// Records the round's norms; empty rounds are logged with zero stats.
    pub fn record(&mut self, round: u64, norms: &[f64]) -> RoundNormStats {
        let (center, spread) = if norms.is_empty() {
            (0.0, 0.0)
        } else {
            robust_center_spread(norms)
        };
        let stats = RoundNormStats {
            round,
            center,
            spread,
            count: norms.len(),
        };
        self.rounds.push(stats);
        stats
    }

    pub fn rounds(&self) -> &[RoundNormStats] {
        &self.rounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn updates_with_norms(norms: &[f64]) -> BTreeMap<ClientId, ParamVector> {
        norms
            .iter()
            .enumerate()
            .map(|(i, &n)| (ClientId(i as u32), ParamVector::new(vec![n]).unwrap()))
            .collect()
    }

    #[test]
    fn gross_outlier_is_flagged_alone() {
        let u = updates_with_norms(&[1.0, 1.1, 0.9, 1.0, 50.0]);
        let verdicts = detect_anomalies(&u, 3.0);
        let flagged: Vec<u32> = verdicts
            .iter()
            .filter(|v| v.flagged)
            .map(|v| v.client_id.0)
            .collect();
        assert_eq!(flagged, vec![4]);
        let outlier = verdicts.iter().find(|v| v.client_id.0 == 4).unwrap();
        assert_eq!(outlier.reason, AnomalyReason::NormOutlier);
        assert!((outlier.robust_z - 330.505).abs() < 0.1, "z {}", outlier.robust_z);
    }

    #[test]
    fn identical_norms_yield_no_flags() {
        let u = updates_with_norms(&[2.0, 2.0, 2.0, 2.0]);
        assert!(detect_anomalies(&u, 3.0).iter().all(|v| !v.flagged));
    }

    #[test]
    fn too_few_updates_yield_clean_verdicts() {
        let u = updates_with_norms(&[1.0, 1e9]);
        let verdicts = detect_anomalies(&u, 3.0);
        assert_eq!(verdicts.len(), 2);
        assert!(verdicts.iter().all(|v| !v.flagged && v.reason == AnomalyReason::None));
    }

    #[test]
    fn flags_are_scale_equivariant() {
        let base = [1.0, 1.2, 0.8, 1.1, 9.0, 1.05];
        let scaled: Vec<f64> = base.iter().map(|n| n * 1000.0).collect();
        let flags = |norms: &[f64]| -> Vec<bool> {
            detect_anomalies(&updates_with_norms(norms), 3.0)
                .iter()
                .map(|v| v.flagged)
                .collect()
        };
        assert_eq!(flags(&base), flags(&scaled));
    }

    #[test]
    fn trust_moves_and_clamps() {
        let mut scores: BTreeMap<ClientId, f64> =
            [(ClientId(0), 0.5), (ClientId(1), 0.95)].into_iter().collect();
        let verdicts = vec![
            AnomalyVerdict::flagged(ClientId(0), 5.0, AnomalyReason::NormOutlier),
            AnomalyVerdict::clean(ClientId(1), 0.1),
        ];
        update_trust(&mut scores, &verdicts, 0.1, 0.2);
        assert!((scores[&ClientId(0)] - 0.3).abs() < 1e-12);
        assert_eq!(scores[&ClientId(1)], 1.0);
    }

    #[test]
    fn persistent_flagging_reaches_zero() {
        let mut scores: BTreeMap<ClientId, f64> = [(ClientId(7), 0.5)].into_iter().collect();
        let verdict = vec![AnomalyVerdict::flagged(
            ClientId(7),
            9.0,
            AnomalyReason::NormOutlier,
        )];
        for _ in 0..5 {
            update_trust(&mut scores, &verdict, 0.05, 0.125);
        }
        assert_eq!(scores[&ClientId(7)], 0.0);
    }

    #[test]
    fn eligibility_thresholds() {
        let scores: BTreeMap<ClientId, f64> =
            [(ClientId(0), 0.3), (ClientId(1), 0.6)].into_iter().collect();
        assert_eq!(eligible_clients(&scores, 0.0).len(), 2);
        assert!(eligible_clients(&scores, 1.0).is_empty());
        let mid = eligible_clients(&scores, 0.5);
        assert_eq!(mid.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn stats_log_is_append_only() {
        let mut stats = UpdateStats::new();
        let r1 = stats.record(1, &[1.0, 2.0, 3.0]);
        assert_eq!(r1.center, 2.0);
        assert_eq!(r1.spread, 1.0);
        let r2 = stats.record(2, &[]);
        assert_eq!(r2.count, 0);
        assert_eq!(stats.rounds().len(), 2);
        assert_eq!(stats.rounds()[0], r1);
    }
}
