//! The round state machine tying everything together: selection, local
//! training, the privacy mechanism, adversarial transport, verification,
//! anomaly detection, robust aggregation, the global update, and metrics.
//!
//! Determinism contract: every random decision draws from a stream derived
//! from (master seed, purpose, round, client), client work is parallelized
//! over an order-preserving map, and all server-side iteration is in
//! ascending client-id order, so output is byte-identical across runs and
//! worker-thread counts.

use crate::aggregation::{aggregate, apply_global_update};
use crate::attack::{self, AttackVariant};
use crate::budget::PrivacyLedger;
use crate::config::ExperimentConfig;
use crate::data::{generate_population, partition_non_iid, PopulationSpec};
use crate::defense::{
    detect_anomalies, eligible_clients, update_trust, AnomalyReason, AnomalyVerdict, UpdateStats,
};
use crate::envelope::{decode_payload, seal, verify, ClientUpdate, VerifyOutcome};
use crate::ldp::{calibrate_sigma, clip_update, perturb, quantize_uniform, top_k_sparsify};
use crate::model::{evaluate, init_params, local_train, DatasetShard};
use crate::params::{ClientId, ParamVector};
use crate::rng::{derive_key, derive_rng};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

/// A client flagged this round, with the detector score and the reason.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlagRecord {
    pub id: u32,
    pub reason: AnomalyReason,
    pub z: f64,
}

/// Why a single envelope was rejected during verification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    IntegrityFail,
    AuthFail,
    Malformed,
}

/// One rejected envelope (a client may also have a verifying one).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RejectRecord {
    pub id: u32,
    pub reason: RejectReason,
}

/// Everything observable about one round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub selected: Vec<u32>,
    pub budget_excluded: Vec<u32>,
    pub received: Vec<u32>,
    pub verified: Vec<u32>,
    pub flagged: Vec<FlagRecord>,
    pub rejected_envelopes: Vec<RejectRecord>,
    pub aggregated: Vec<u32>,
    pub rejected_by_rule: Vec<u32>,
    pub update_norms: Vec<(u32, f64)>,
    pub trust: Vec<(u32, f64)>,
    pub cumulative_eps: Vec<(u32, f64)>,
    pub accuracy: f64,
    pub loss: f64,
    pub rule: String,
    pub divisor: usize,
    pub empty_reason: Option<String>,
}

/// End-of-run aggregate metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub rounds: u64,
    pub seed: u64,
    pub rule: String,
    pub attack: String,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub detection_tpr: Option<f64>,
    pub detection_fpr: Option<f64>,
    pub cumulative_eps: Vec<(u32, f64)>,
    pub final_trust: Vec<(u32, f64)>,
    pub budget_exhausted: Vec<u32>,
}

/// Full output of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRun {
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum OutputLine<'a> {
    Round(&'a RoundRecord),
    Summary(&'a Summary),
}

/// Writes the run as JSON lines: one object per round, then the summary.
pub fn write_jsonl<W: Write>(run: &ExperimentRun, writer: &mut W) -> Result<()> {
    let mut emit = |line: OutputLine| -> Result<()> {
        let text = serde_json::to_string(&line)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer.write_all(text.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    };
    for record in &run.records {
        emit(OutputLine::Round(record))?;
    }
    emit(OutputLine::Summary(&run.summary))
}

#[derive(Clone, Copy, Debug, Default)]
struct DetectionCounts {
    true_flags: u64,
    attacker_updates: u64,
    false_flags: u64,
    honest_updates: u64,
}

/// Live federation: global model, shards, keys, ledger, trust, and the
/// transport adversary's replay store.
pub struct Simulation {
    cfg: ExperimentConfig,
    shards: Vec<DatasetShard>,
    eval_shard: DatasetShard,
    keys: Vec<[u8; 32]>,
    theta: ParamVector,
    round: u64,
    ledger: PrivacyLedger,
    trust: BTreeMap<ClientId, f64>,
    stats: UpdateStats,
    last_envelopes: BTreeMap<ClientId, ClientUpdate>,
    detection: DetectionCounts,
}

impl Simulation {
    /// Generates data, partitions shards, applies data attacks, and issues
    /// keys; the simulation is then ready to run rounds.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let master = cfg.seed;
        let population =
            generate_population(&cfg.population, &mut derive_rng(master, "population", &[]));
        let mut shards =
            partition_non_iid(&population, &cfg.partition, &mut derive_rng(master, "partition", &[]))?;
        let eval_spec = PopulationSpec::new(
            cfg.eval_n,
            cfg.population.d(),
            cfg.population.class_sep(),
            cfg.population.positive_frac(),
        )?;
        let eval_shard =
            generate_population(&eval_spec, &mut derive_rng(master, "evaluation", &[]));

        for &attacker in &cfg.attack.attacker_ids {
            let idx = attacker.0 as usize;
            let mut rng = derive_rng(master, "attack-setup", &[attacker.0 as u64]);
            match &cfg.attack.variant {
                AttackVariant::LabelFlip { frac } => {
                    shards[idx] = attack::flip_labels(&shards[idx], *frac, &mut rng);
                }
                AttackVariant::DataPoison { frac, target_shift } => {
                    shards[idx] =
                        attack::poison_data(&shards[idx], *frac, target_shift, &mut rng)?;
                }
                AttackVariant::None
                | AttackVariant::ScaleUpdate { .. }
                | AttackVariant::RandomUpdate { .. } => {}
            }
        }

        let n = cfg.partition.n_clients();
        let keys: Vec<[u8; 32]> = (0..n)
            .map(|i| derive_key(master, ClientId(i as u32)))
            .collect();
        let trust: BTreeMap<ClientId, f64> = (0..n)
            .map(|i| (ClientId(i as u32), cfg.defense.initial_trust))
            .collect();

        Ok(Simulation {
            shards,
            eval_shard,
            keys,
            theta: init_params(&cfg.model),
            round: 0,
            ledger: cfg.privacy.ledger(),
            trust,
            stats: UpdateStats::new(),
            last_envelopes: BTreeMap::new(),
            detection: DetectionCounts::default(),
            cfg: cfg.clone(),
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn global_params(&self) -> &ParamVector {
        &self.theta
    }

    pub fn trust_of(&self, client: ClientId) -> f64 {
        self.trust.get(&client).copied().unwrap_or(0.0)
    }

    fn enrolled(&self) -> impl Iterator<Item = ClientId> + '_ {
        (0..self.cfg.partition.n_clients()).map(|i| ClientId(i as u32))
    }

    /// Per-round privacy charge for one client; zero when privacy is off.
    fn charge_of(&self, client: ClientId) -> (f64, f64) {
        match self.cfg.privacy.params_for(client) {
            Some(params) => (params.epsilon(), params.delta()),
            None => (0.0, 0.0),
        }
    }

    /// Builds the envelope one participant submits this round.
    fn client_submission(&self, client: ClientId, round: u64) -> Result<ClientUpdate> {
        let mut rng = derive_rng(self.cfg.seed, "client", &[round, client.0 as u64]);
        let shard = &self.shards[client.0 as usize];
        let key = &self.keys[client.0 as usize];
        let privacy = self.cfg.privacy.params_for(client);
        let eps_declared = privacy.map_or(0.0, |p| p.epsilon());

        if self.cfg.attack.is_attacker(client) {
            match &self.cfg.attack.variant {
                AttackVariant::ScaleUpdate { factor } => {
                    let delta =
                        local_train(&self.theta, shard, &self.cfg.train, &self.cfg.model, &mut rng)?;
                    let (base, pre_norm) = match privacy {
                        Some(p) => clip_update(&delta, p.clip_norm()),
                        None => {
                            let norm = delta.l2_norm();
                            (delta, norm)
                        }
                    };
                    let forged = attack::scale_update(&base, *factor);
                    return Ok(seal(client, round, &forged, eps_declared, pre_norm, key));
                }
                AttackVariant::RandomUpdate { sigma_a } => {
                    let forged =
                        attack::random_update(self.cfg.model.param_dim(), *sigma_a, &mut rng);
                    let norm = forged.l2_norm();
                    return Ok(seal(client, round, &forged, eps_declared, norm, key));
                }
                AttackVariant::None
                | AttackVariant::LabelFlip { .. }
                | AttackVariant::DataPoison { .. } => {}
            }
        }

        let delta = local_train(&self.theta, shard, &self.cfg.train, &self.cfg.model, &mut rng)?;
        let (mut update, pre_norm) = match privacy {
            Some(p) => {
                let (clipped, pre_norm) = clip_update(&delta, p.clip_norm());
                let scale = calibrate_sigma(&p);
                (perturb(&clipped, &scale, &mut rng), pre_norm)
            }
            None => {
                let norm = delta.l2_norm();
                (delta, norm)
            }
        };
        if let Some(c) = &self.cfg.compression {
            if let Some(k) = c.top_k {
                update = top_k_sparsify(&update, k);
            }
            if let Some(bits) = c.quantize_bits {
                update = quantize_uniform(&update, bits, c.quantize_range);
            }
        }
        Ok(seal(client, round, &update, eps_declared, pre_norm, key))
    }

    /// Advances the federation by one round and reports what happened.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        self.round += 1;
        let t = self.round;
        let rule_name = self.cfg.rule.to_string();

        let trust_eligible: BTreeSet<ClientId> = if self.cfg.defense.enabled {
            eligible_clients(&self.trust, self.cfg.defense.theta_min)
        } else {
            self.enrolled().collect()
        };
        let mut eligible: Vec<ClientId> = Vec::new();
        let mut budget_excluded: Vec<u32> = Vec::new();
        for c in trust_eligible {
            let (eps, delta) = self.charge_of(c);
            if self.ledger.can_afford(c, eps, delta) {
                eligible.push(c);
            } else {
                budget_excluded.push(c.0);
            }
        }

        if eligible.is_empty() {
            return Ok(self.finish_round(
                t,
                Vec::new(),
                budget_excluded,
                BTreeSet::new(),
                BTreeMap::new(),
                Vec::new(),
                Vec::new(),
                Vec::new(),
                BTreeSet::new(),
                BTreeSet::new(),
                0,
                Some("no_eligible_clients".to_string()),
                &rule_name,
            ));
        }

        let want = (self.cfg.client_fraction * eligible.len() as f64 - 1e-9).ceil() as usize;
        let count = want.clamp(1, eligible.len());
        let mut selection_rng = derive_rng(self.cfg.seed, "selection", &[t]);
        let mut selected: Vec<ClientId> =
            rand::seq::index::sample(&mut selection_rng, eligible.len(), count)
                .into_iter()
                .map(|i| eligible[i])
                .collect();
        selected.sort_unstable();

        let mut participants: Vec<ClientId> = Vec::with_capacity(selected.len());
        for &c in &selected {
            let (eps, delta) = self.charge_of(c);
            match self.ledger.charge(c, eps, delta) {
                Ok(()) => participants.push(c),
                Err(Error::BudgetExhausted(_)) => budget_excluded.push(c.0),
                Err(e) => return Err(e),
            }
        }

        let submissions: Vec<ClientUpdate> = participants
            .par_iter()
            .map(|&c| self.client_submission(c, t))
            .collect::<Result<_>>()?;

        // Transport: drops, replays of last round's stored envelopes, and a
        // payload tamper on the first delivered envelope.
        let mut delivered: Vec<ClientUpdate> = Vec::new();
        for env in submissions {
            let client = env.client_id;
            let mut transport_rng =
                derive_rng(self.cfg.seed, "transport", &[t, client.0 as u64]);
            let dropped = transport_rng.random_bool(self.cfg.transport.drop_prob);
            if !dropped {
                delivered.push(env.clone());
            }
            if self.cfg.transport.replay {
                if let Some(stale) = self.last_envelopes.get(&client) {
                    delivered.push(stale.clone());
                }
            }
            self.last_envelopes.insert(client, env);
        }
        if let Some(tamper) = self.cfg.transport.tamper {
            if let Some(first) = delivered.first_mut() {
                if tamper.index < first.payload.len() {
                    first.payload[tamper.index] = tamper.value;
                }
            }
        }

        // Verification and decoding; the first verifying envelope per client
        // wins, and a client is only failed if no envelope verifies.
        let mut received: BTreeSet<ClientId> = BTreeSet::new();
        let mut updates: BTreeMap<ClientId, ParamVector> = BTreeMap::new();
        let mut rejected_envelopes: Vec<RejectRecord> = Vec::new();
        let mut first_failure: BTreeMap<ClientId, RejectReason> = BTreeMap::new();
        for env in &delivered {
            let client = env.client_id;
            received.insert(client);
            let key = &self.keys[client.0 as usize];
            let reject = match verify(env, key, t) {
                VerifyOutcome::Ok => match decode_payload(&env.payload) {
                    Ok(v) if v.len() == self.cfg.model.param_dim() => {
                        updates.entry(client).or_insert(v);
                        continue;
                    }
                    _ => RejectReason::Malformed,
                },
                VerifyOutcome::IntegrityFail => RejectReason::IntegrityFail,
                VerifyOutcome::AuthFail => RejectReason::AuthFail,
            };
            rejected_envelopes.push(RejectRecord {
                id: client.0,
                reason: reject,
            });
            first_failure.entry(client).or_insert(reject);
        }

        let mut verdicts: Vec<AnomalyVerdict> = Vec::new();
        for (&client, &reason) in &first_failure {
            if !updates.contains_key(&client) {
                let reason = match reason {
                    RejectReason::AuthFail => AnomalyReason::AuthFail,
                    _ => AnomalyReason::IntegrityFail,
                };
                verdicts.push(AnomalyVerdict::flagged(client, 0.0, reason));
            }
        }

        let norms: Vec<(u32, f64)> = updates
            .iter()
            .map(|(c, u)| (c.0, u.l2_norm()))
            .collect();
        self.stats
            .record(t, &norms.iter().map(|&(_, n)| n).collect::<Vec<f64>>());

        if self.cfg.defense.enabled {
            let detector_verdicts = detect_anomalies(&updates, self.cfg.defense.tau);
            for v in &detector_verdicts {
                let is_attacker = self.cfg.attack.is_attacker(v.client_id);
                let flagged_outlier = v.flagged && v.reason == AnomalyReason::NormOutlier;
                if is_attacker {
                    self.detection.attacker_updates += 1;
                    self.detection.true_flags += u64::from(flagged_outlier);
                } else {
                    self.detection.honest_updates += 1;
                    self.detection.false_flags += u64::from(flagged_outlier);
                }
            }
            verdicts.extend(detector_verdicts);
        } else {
            verdicts.extend(updates.keys().map(|&c| AnomalyVerdict::clean(c, 0.0)));
        }
        verdicts.sort_by_key(|v| v.client_id);

        let excluded: BTreeSet<ClientId> = verdicts
            .iter()
            .filter(|v| v.flagged)
            .map(|v| v.client_id)
            .collect();
        let to_aggregate: BTreeMap<ClientId, ParamVector> = updates
            .iter()
            .filter(|(c, _)| !excluded.contains(c))
            .map(|(&c, u)| (c, u.clone()))
            .collect();

        let mut aggregated: BTreeSet<ClientId> = BTreeSet::new();
        let mut rejected_by_rule: BTreeSet<ClientId> = BTreeSet::new();
        let mut empty_reason: Option<String> = None;
        if to_aggregate.is_empty() {
            empty_reason = Some("no_verified_updates".to_string());
        } else {
            match aggregate(&to_aggregate, self.cfg.rule) {
                Ok(outcome) => {
                    self.theta = apply_global_update(&self.theta, &outcome.aggregate)?;
                    aggregated = outcome.contributors;
                    rejected_by_rule = outcome.rejected;
                }
                Err(Error::RuleInfeasible(_)) => {
                    empty_reason = Some("rule_infeasible".to_string());
                }
                Err(e) => return Err(e),
            }
        }

        if self.cfg.defense.enabled {
            update_trust(
                &mut self.trust,
                &verdicts,
                self.cfg.defense.alpha,
                self.cfg.defense.beta,
            );
        }

        let flagged: Vec<FlagRecord> = verdicts
            .iter()
            .filter(|v| v.flagged)
            .map(|v| FlagRecord {
                id: v.client_id.0,
                reason: v.reason,
                z: v.robust_z,
            })
            .collect();

        Ok(self.finish_round(
            t,
            selected.iter().map(|c| c.0).collect(),
            budget_excluded,
            received,
            updates,
            flagged,
            rejected_envelopes,
            norms,
            aggregated,
            rejected_by_rule,
            to_aggregate.len(),
            empty_reason,
            &rule_name,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_round(
        &mut self,
        t: u64,
        selected: Vec<u32>,
        mut budget_excluded: Vec<u32>,
        received: BTreeSet<ClientId>,
        updates: BTreeMap<ClientId, ParamVector>,
        flagged: Vec<FlagRecord>,
        rejected_envelopes: Vec<RejectRecord>,
        update_norms: Vec<(u32, f64)>,
        aggregated: BTreeSet<ClientId>,
        rejected_by_rule: BTreeSet<ClientId>,
        divisor: usize,
        empty_reason: Option<String>,
        rule_name: &str,
    ) -> RoundRecord {
        budget_excluded.sort_unstable();
        let (accuracy, loss) =
            evaluate(&self.theta, &self.eval_shard, &self.cfg.model).expect("eval shard nonempty");
        RoundRecord {
            round: t,
            selected,
            budget_excluded,
            received: received.iter().map(|c| c.0).collect(),
            verified: updates.keys().map(|c| c.0).collect(),
            flagged,
            rejected_envelopes,
            aggregated: aggregated.iter().map(|c| c.0).collect(),
            rejected_by_rule: rejected_by_rule.iter().map(|c| c.0).collect(),
            update_norms,
            trust: self.trust.iter().map(|(c, &s)| (c.0, s)).collect(),
            cumulative_eps: self
                .enrolled()
                .map(|c| (c.0, self.ledger.spent(c).eps))
                .collect(),
            accuracy,
            loss,
            rule: rule_name.to_string(),
            divisor,
            empty_reason,
        }
    }

    /// Summary over everything run so far.
    pub fn summarize(&self, records: &[RoundRecord]) -> Summary {
        let last = records.last();
        let budget_exhausted: Vec<u32> = if self.cfg.privacy.enabled() {
            self.enrolled()
                .filter(|&c| {
                    let (eps, delta) = self.charge_of(c);
                    !self.ledger.can_afford(c, eps, delta)
                })
                .map(|c| c.0)
                .collect()
        } else {
            Vec::new()
        };
        Summary {
            rounds: self.round,
            seed: self.cfg.seed,
            rule: self.cfg.rule.to_string(),
            attack: self.cfg.attack.variant.name().to_string(),
            final_accuracy: last.map(|r| r.accuracy),
            final_loss: last.map(|r| r.loss),
            detection_tpr: ratio(self.detection.true_flags, self.detection.attacker_updates),
            detection_fpr: ratio(self.detection.false_flags, self.detection.honest_updates),
            cumulative_eps: self
                .enrolled()
                .map(|c| (c.0, self.ledger.spent(c).eps))
                .collect(),
            final_trust: self.trust.iter().map(|(c, &s)| (c.0, s)).collect(),
            budget_exhausted,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Builds the simulation and runs the configured number of rounds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    let mut sim = Simulation::build(cfg)?;
    let mut records = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        records.push(sim.run_round()?);
    }
    let summary = sim.summarize(&records);
    Ok(ExperimentRun { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn config(overrides: &[&str]) -> ExperimentConfig {
        let base = "
rounds = 3
eval_n = 200
[population]
n_total = 300
d = 4
class_sep = 6.0
positive_frac = 0.5
[partition]
n_clients = 5
dirichlet_alpha = 100.0
min_shard = 10
[train]
learning_rate = 0.2
local_epochs = 1
batch_size = 16
";
        let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config_str(base, &overrides).unwrap()
    }

    #[test]
    fn zero_rounds_produce_no_records() {
        let cfg = config(&["rounds=0"]);
        let run = run_experiment(&cfg).unwrap();
        assert!(run.records.is_empty());
        assert_eq!(run.summary.final_accuracy, None);
    }

    #[test]
    fn zero_epoch_training_leaves_theta_fixed() {
        let cfg = config(&["train.local_epochs=0"]);
        let mut sim = Simulation::build(&cfg).unwrap();
        let before = sim.global_params().clone();
        sim.run_round().unwrap();
        assert_eq!(*sim.global_params(), before);
    }

    #[test]
    fn round_sets_nest_properly() {
        let cfg = config(&["client_fraction=0.6", "transport.drop_prob=0.3"]);
        let run = run_experiment(&cfg).unwrap();
        for r in &run.records {
            let selected: BTreeSet<u32> = r.selected.iter().copied().collect();
            let received: BTreeSet<u32> = r.received.iter().copied().collect();
            let verified: BTreeSet<u32> = r.verified.iter().copied().collect();
            let aggregated: BTreeSet<u32> = r.aggregated.iter().copied().collect();
            assert!(received.is_subset(&selected));
            assert!(verified.is_subset(&received));
            assert!(aggregated.is_subset(&verified));
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_output() {
        let cfg = config(&["privacy.mode=analytic", "privacy.epsilon=2.0"]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_jsonl(&a, &mut buf_a).unwrap();
        write_jsonl(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        let cfg_c = config(&["privacy.mode=analytic", "privacy.epsilon=2.0", "seed=43"]);
        let c = run_experiment(&cfg_c).unwrap();
        let mut buf_c = Vec::new();
        write_jsonl(&c, &mut buf_c).unwrap();
        assert_ne!(buf_a, buf_c);
    }

    #[test]
    fn replayed_envelopes_are_rejected_without_penalizing_the_sender() {
        let cfg = config(&["transport.replay=true"]);
        let run = run_experiment(&cfg).unwrap();
        assert!(run.records[0].rejected_envelopes.is_empty());
        for r in &run.records[1..] {
            assert_eq!(r.rejected_envelopes.len(), r.selected.len());
            assert!(r
                .rejected_envelopes
                .iter()
                .all(|e| e.reason == RejectReason::AuthFail));
            assert_eq!(r.verified, r.selected);
            assert!(r
                .flagged
                .iter()
                .all(|f| f.reason == AnomalyReason::NormOutlier));
        }
    }

    #[test]
    fn tampered_first_envelope_is_excluded_while_round_completes() {
        let cfg = config(&[
            "transport.tamper_index=6",
            "transport.tamper_value=170",
            "defense.enabled=false",
        ]);
        let run = run_experiment(&cfg).unwrap();
        for r in &run.records {
            let victim = r.selected[0];
            assert!(r
                .flagged
                .iter()
                .any(|f| f.id == victim && f.reason == AnomalyReason::IntegrityFail));
            assert!(!r.aggregated.contains(&victim));
            assert_eq!(r.aggregated.len(), r.selected.len() - 1);
            assert!(r.empty_reason.is_none());
        }
    }

    #[test]
    fn budget_exhaustion_excludes_exactly_on_schedule() {
        let cfg = config(&[
            "rounds=5",
            "privacy.mode=simple",
            "privacy.epsilon=1.0",
            "privacy.eps_budget=3.0",
        ]);
        let run = run_experiment(&cfg).unwrap();
        for r in &run.records[..3] {
            assert!(r.empty_reason.is_none());
            assert!(r.budget_excluded.is_empty());
        }
        for r in &run.records[3..] {
            assert_eq!(r.empty_reason.as_deref(), Some("no_eligible_clients"));
            assert_eq!(r.budget_excluded.len(), 5);
            assert!(r.cumulative_eps.iter().all(|&(_, e)| e == 3.0));
        }
        assert_eq!(run.summary.budget_exhausted.len(), 5);
    }

    #[test]
    fn single_client_round_aggregates_that_client() {
        let cfg = config(&["partition.n_clients=1"]);
        let mut sim = Simulation::build(&cfg).unwrap();
        let record = sim.run_round().unwrap();
        assert_eq!(record.aggregated, vec![0]);
        assert_eq!(record.divisor, 1);
    }
}
