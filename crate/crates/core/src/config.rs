//! Experiment configuration: a strict TOML schema with documented defaults,
//! dotted-path overrides, and validation into the typed module parameters.
//!
//! Unknown keys are rejected rather than ignored so a typo cannot silently
//! run a different experiment.

use crate::aggregation::AggregationRule;
use crate::attack::{AttackSpec, AttackVariant, TamperRule, TransportAdversary};
use crate::budget::PrivacyLedger;
use crate::data::{PartitionSpec, PopulationSpec};
use crate::ldp::{CalibrationMode, PrivacyParams};
use crate::model::{ModelSpec, TrainConfig};
use crate::params::ClientId;
use crate::{Error, Result};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    rounds: u64,
    client_fraction: f64,
    eval_n: usize,
    out: Option<String>,
    population: RawPopulation,
    partition: RawPartition,
    model: RawModel,
    train: RawTrain,
    privacy: RawPrivacy,
    compression: RawCompression,
    aggregation: RawAggregation,
    attack: RawAttack,
    transport: RawTransport,
    defense: RawDefense,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            seed: 42,
            rounds: 10,
            client_fraction: 1.0,
            eval_n: 2000,
            out: None,
            population: RawPopulation::default(),
            partition: RawPartition::default(),
            model: RawModel::default(),
            train: RawTrain::default(),
            privacy: RawPrivacy::default(),
            compression: RawCompression::default(),
            aggregation: RawAggregation::default(),
            attack: RawAttack::default(),
            transport: RawTransport::default(),
            defense: RawDefense::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPopulation {
    n_total: usize,
    d: usize,
    class_sep: f64,
    positive_frac: f64,
}

impl Default for RawPopulation {
    fn default() -> Self {
        RawPopulation {
            n_total: 2000,
            d: 10,
            class_sep: 6.0,
            positive_frac: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPartition {
    n_clients: usize,
    dirichlet_alpha: f64,
    min_shard: usize,
}

impl Default for RawPartition {
    fn default() -> Self {
        RawPartition {
            n_clients: 10,
            dirichlet_alpha: 1.0,
            min_shard: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawModel {
    l2_lambda: f64,
    intercept: bool,
}

impl Default for RawModel {
    fn default() -> Self {
        RawModel {
            l2_lambda: 0.0,
            intercept: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawTrain {
    learning_rate: f64,
    local_epochs: u32,
    batch_size: usize,
}

impl Default for RawTrain {
    fn default() -> Self {
        RawTrain {
            learning_rate: 0.1,
            local_epochs: 1,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPrivacy {
    mode: String,
    epsilon: f64,
    delta: f64,
    clip_norm: f64,
    eps_budget: Option<f64>,
    delta_budget: Option<f64>,
    per_client_epsilon: BTreeMap<String, f64>,
}

impl Default for RawPrivacy {
    fn default() -> Self {
        RawPrivacy {
            mode: "off".to_string(),
            epsilon: 1.0,
            delta: 1e-5,
            clip_norm: 1.0,
            eps_budget: None,
            delta_budget: None,
            per_client_epsilon: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawCompression {
    enabled: bool,
    top_k: Option<usize>,
    quantize_bits: Option<u32>,
    quantize_range: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawAggregation {
    rule: String,
}

impl Default for RawAggregation {
    fn default() -> Self {
        RawAggregation {
            rule: "mean".to_string(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawAttack {
    variant: String,
    attacker_ids: Vec<u32>,
    frac: Option<f64>,
    target_shift: Option<Vec<f64>>,
    factor: Option<f64>,
    sigma_a: Option<f64>,
}

impl Default for RawAttack {
    fn default() -> Self {
        RawAttack {
            variant: "none".to_string(),
            attacker_ids: Vec::new(),
            frac: None,
            target_shift: None,
            factor: None,
            sigma_a: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawTransport {
    drop_prob: f64,
    tamper_index: Option<usize>,
    tamper_value: Option<u8>,
    replay: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawDefense {
    enabled: bool,
    tau: f64,
    alpha: f64,
    beta: f64,
    theta_min: f64,
    initial_trust: f64,
}

impl Default for RawDefense {
    fn default() -> Self {
        RawDefense {
            enabled: true,
            tau: 3.0,
            alpha: 0.05,
            beta: 0.25,
            theta_min: 0.2,
            initial_trust: 0.5,
        }
    }
}

/// Privacy behavior of honest clients.
#[derive(Clone, Debug)]
pub enum PrivacySettings {
    Off,
    On {
        params: PrivacyParams,
        per_client_epsilon: BTreeMap<ClientId, f64>,
        eps_budget: Option<f64>,
        delta_budget: Option<f64>,
    },
}

impl PrivacySettings {
    pub fn enabled(&self) -> bool {
        matches!(self, PrivacySettings::On { .. })
    }

    /// Mechanism parameters for one client, honoring per-client overrides;
    /// `None` when privacy is off.
    pub fn params_for(&self, client: ClientId) -> Option<PrivacyParams> {
        match self {
            PrivacySettings::Off => None,
            PrivacySettings::On {
                params,
                per_client_epsilon,
                ..
            } => Some(match per_client_epsilon.get(&client) {
                Some(&eps) => params
                    .with_epsilon(eps)
                    .expect("override validated at parse time"),
                None => *params,
            }),
        }
    }

    /// Fresh ledger honoring the configured caps; unbounded when no cap is
    /// set or privacy is off.
    pub fn ledger(&self) -> PrivacyLedger {
        match self {
            PrivacySettings::Off => PrivacyLedger::unbounded(),
            PrivacySettings::On {
                eps_budget,
                delta_budget,
                ..
            } => {
                let eps = eps_budget.unwrap_or(f64::INFINITY);
                let delta = delta_budget.unwrap_or(1.0);
                PrivacyLedger::new(eps, delta).expect("budgets validated at parse time")
            }
        }
    }
}

/// Update compression applied by honest clients after perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionSettings {
    pub top_k: Option<usize>,
    pub quantize_bits: Option<u32>,
    pub quantize_range: f64,
}

/// Detection, trust, and eligibility parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefenseSettings {
    pub enabled: bool,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta_min: f64,
    pub initial_trust: f64,
}

/// A fully validated experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: u64,
    pub client_fraction: f64,
    pub eval_n: usize,
    pub out: Option<PathBuf>,
    pub population: PopulationSpec,
    pub partition: PartitionSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub privacy: PrivacySettings,
    pub compression: Option<CompressionSettings>,
    pub rule: AggregationRule,
    pub attack: AttackSpec,
    pub transport: TransportAdversary,
    pub defense: DefenseSettings,
}

/// Parses an aggregation rule from its compact text form: `mean`,
/// `coord_median`, `trimmed_mean(k)`, or `multi_krum(f,m)`.
pub fn parse_rule(text: &str) -> Result<AggregationRule> {
    let text = text.trim();
    let invalid = |reason: String| Error::config("aggregation.rule", reason);
    if let Some(args) = text.strip_prefix("trimmed_mean(").and_then(|r| r.strip_suffix(')')) {
        let trim: usize = args
            .trim()
            .parse()
            .map_err(|_| invalid(format!("trim count '{args}' is not an integer")))?;
        return Ok(AggregationRule::TrimmedMean { trim });
    }
    if let Some(args) = text.strip_prefix("multi_krum(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(invalid(format!("expected multi_krum(f,m), got '{text}'")));
        }
        let f: usize = parts[0]
            .parse()
            .map_err(|_| invalid(format!("attacker count '{}' is not an integer", parts[0])))?;
        let m: usize = parts[1]
            .parse()
            .map_err(|_| invalid(format!("selection count '{}' is not an integer", parts[1])))?;
        if m < 1 {
            return Err(invalid("selection count must be at least 1".to_string()));
        }
        return Ok(AggregationRule::MultiKrum { f, m });
    }
    match text {
        "mean" => Ok(AggregationRule::Mean),
        "coord_median" => Ok(AggregationRule::CoordMedian),
        other => Err(invalid(format!(
            "unknown rule '{other}'; expected mean, coord_median, trimmed_mean(k), or multi_krum(f,m)"
        ))),
    }
}

fn parse_calibration_mode(text: &str) -> Result<Option<CalibrationMode>> {
    match text {
        "off" => Ok(None),
        "simple" => Ok(Some(CalibrationMode::Simple)),
        "analytic" => Ok(Some(CalibrationMode::Analytic)),
        other => Err(Error::config(
            "privacy.mode",
            format!("unknown mode '{other}'; expected off, simple, or analytic"),
        )),
    }
}

fn parse_attack(raw: &RawAttack, n_clients: usize, d: usize) -> Result<AttackSpec> {
    let mut attacker_ids = BTreeSet::new();
    for &id in &raw.attacker_ids {
        if (id as usize) >= n_clients {
            return Err(Error::config(
                "attack.attacker_ids",
                format!("client {id} is not enrolled (n_clients = {n_clients})"),
            ));
        }
        attacker_ids.insert(ClientId(id));
    }
    let frac = |field: &'static str| -> Result<f64> {
        let frac = raw
            .frac
            .ok_or_else(|| Error::config(field, "required for this attack variant"))?;
        if !frac.is_finite() || !(0.0..=1.0).contains(&frac) {
            return Err(Error::config(field, "must lie in [0, 1]"));
        }
        Ok(frac)
    };
    let variant = match raw.variant.as_str() {
        "none" => AttackVariant::None,
        "label_flip" => AttackVariant::LabelFlip {
            frac: frac("attack.frac")?,
        },
        "data_poison" => {
            let target_shift = raw
                .target_shift
                .clone()
                .ok_or_else(|| Error::config("attack.target_shift", "required for data_poison"))?;
            if target_shift.len() != d {
                return Err(Error::config(
                    "attack.target_shift",
                    format!("length {} does not match d = {d}", target_shift.len()),
                ));
            }
            if let Some(i) = target_shift.iter().position(|v| !v.is_finite()) {
                return Err(Error::config(
                    "attack.target_shift",
                    format!("entry {i} is not finite"),
                ));
            }
            AttackVariant::DataPoison {
                frac: frac("attack.frac")?,
                target_shift,
            }
        }
        "scale_update" => {
            let factor = raw
                .factor
                .ok_or_else(|| Error::config("attack.factor", "required for scale_update"))?;
            if !factor.is_finite() {
                return Err(Error::config("attack.factor", "must be finite"));
            }
            AttackVariant::ScaleUpdate { factor }
        }
        "random_update" => {
            let sigma_a = raw
                .sigma_a
                .ok_or_else(|| Error::config("attack.sigma_a", "required for random_update"))?;
            if !sigma_a.is_finite() || sigma_a <= 0.0 {
                return Err(Error::config("attack.sigma_a", "must be positive"));
            }
            AttackVariant::RandomUpdate { sigma_a }
        }
        other => {
            return Err(Error::config(
                "attack.variant",
                format!(
                    "unknown variant '{other}'; expected none, label_flip, data_poison, scale_update, or random_update"
                ),
            ))
        }
    };
    Ok(AttackSpec {
        variant,
        attacker_ids,
    })
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig> {
    let population = PopulationSpec::new(
        raw.population.n_total,
        raw.population.d,
        raw.population.class_sep,
        raw.population.positive_frac,
    )?;
    let partition = PartitionSpec::new(
        raw.partition.n_clients,
        raw.partition.dirichlet_alpha,
        raw.partition.min_shard,
    )?;
    if partition.n_clients() > population.n_total() {
        return Err(Error::config(
            "partition.n_clients",
            format!(
                "{} clients cannot share {} records",
                partition.n_clients(),
                population.n_total()
            ),
        ));
    }
    if partition.n_clients() * partition.min_shard() > population.n_total() {
        return Err(Error::config(
            "partition.min_shard",
            "n_clients * min_shard exceeds n_total",
        ));
    }
    if partition.n_clients() > u32::MAX as usize {
        return Err(Error::config("partition.n_clients", "does not fit in u32"));
    }

    let model = ModelSpec::new(population.d(), raw.model.l2_lambda, raw.model.intercept)?;
    let train = TrainConfig::new(
        raw.train.learning_rate,
        raw.train.local_epochs,
        raw.train.batch_size,
    )?;

    if !raw.client_fraction.is_finite()
        || raw.client_fraction <= 0.0
        || raw.client_fraction > 1.0
    {
        return Err(Error::config("client_fraction", "must lie in (0, 1]"));
    }
    if raw.eval_n < 1 {
        return Err(Error::config("eval_n", "must be at least 1"));
    }

    let privacy = match parse_calibration_mode(&raw.privacy.mode)? {
        None => PrivacySettings::Off,
        Some(mode) => {
            let params = PrivacyParams::new(
                raw.privacy.epsilon,
                raw.privacy.delta,
                raw.privacy.clip_norm,
                mode,
            )?;
            let mut per_client_epsilon = BTreeMap::new();
            for (key, &eps) in &raw.privacy.per_client_epsilon {
                let id: u32 = key.parse().map_err(|_| {
                    Error::config(
                        "privacy.per_client_epsilon",
                        format!("key '{key}' is not a client id"),
                    )
                })?;
                if (id as usize) >= partition.n_clients() {
                    return Err(Error::config(
                        "privacy.per_client_epsilon",
                        format!("client {id} is not enrolled"),
                    ));
                }
                params.with_epsilon(eps).map_err(|_| {
                    Error::config(
                        "privacy.per_client_epsilon",
                        format!("override for client {id} must be positive"),
                    )
                })?;
                per_client_epsilon.insert(ClientId(id), eps);
            }
            if let Some(b) = raw.privacy.eps_budget {
                if b <= 0.0 || b.is_nan() {
                    return Err(Error::config("privacy.eps_budget", "must be positive"));
                }
            }
            if let Some(b) = raw.privacy.delta_budget {
                if !(b > 0.0 && b <= 1.0) {
                    return Err(Error::config("privacy.delta_budget", "must lie in (0, 1]"));
                }
            }
            PrivacySettings::On {
                params,
                per_client_epsilon,
                eps_budget: raw.privacy.eps_budget,
                delta_budget: raw.privacy.delta_budget,
            }
        }
    };

    let compression = if raw.compression.enabled {
        let top_k = raw.compression.top_k;
        let bits = raw.compression.quantize_bits;
        if top_k.is_none() && bits.is_none() {
            return Err(Error::config(
                "compression.enabled",
                "requires top_k or quantize_bits",
            ));
        }
        if let Some(k) = top_k {
            if k < 1 || k > model.param_dim() {
                return Err(Error::config(
                    "compression.top_k",
                    format!("must lie in 1..={}", model.param_dim()),
                ));
            }
        }
        if let Some(b) = bits {
            if !(1..=32).contains(&b) {
                return Err(Error::config("compression.quantize_bits", "must lie in 1..=32"));
            }
        }
        let quantize_range = raw.compression.quantize_range.unwrap_or(1.0);
        if !quantize_range.is_finite() || quantize_range <= 0.0 {
            return Err(Error::config("compression.quantize_range", "must be positive"));
        }
        Some(CompressionSettings {
            top_k,
            quantize_bits: bits,
            quantize_range,
        })
    } else {
        None
    };

    let rule = parse_rule(&raw.aggregation.rule)?;
    let n = partition.n_clients();
    match rule {
        AggregationRule::TrimmedMean { trim } if 2 * trim >= n => {
            return Err(Error::config(
                "aggregation.rule",
                format!("trimmed_mean({trim}) is infeasible even with all {n} clients"),
            ));
        }
        AggregationRule::MultiKrum { f, m } if n < f + 3 || m > n - f => {
            return Err(Error::config(
                "aggregation.rule",
                format!("multi_krum({f},{m}) is infeasible even with all {n} clients"),
            ));
        }
        _ => {}
    }

    let attack = parse_attack(&raw.attack, partition.n_clients(), population.d())?;

    let tamper = match (raw.transport.tamper_index, raw.transport.tamper_value) {
        (None, None) => None,
        (Some(index), Some(value)) => {
            let payload_len = 4 + 8 * model.param_dim();
            if index >= payload_len {
                return Err(Error::config(
                    "transport.tamper_index",
                    format!("payload is only {payload_len} bytes"),
                ));
            }
            Some(TamperRule { index, value })
        }
        _ => {
            return Err(Error::config(
                "transport.tamper_index",
                "tamper_index and tamper_value must be set together",
            ))
        }
    };
    let transport = TransportAdversary {
        drop_prob: raw.transport.drop_prob,
        tamper,
        replay: raw.transport.replay,
    };
    transport.validate()?;

    let d = raw.defense;
    if !d.tau.is_finite() || d.tau <= 0.0 {
        return Err(Error::config("defense.tau", "must be positive"));
    }
    if !d.alpha.is_finite() || d.alpha < 0.0 {
        return Err(Error::config("defense.alpha", "must be nonnegative"));
    }
    if !d.beta.is_finite() || d.beta < 0.0 {
        return Err(Error::config("defense.beta", "must be nonnegative"));
    }
    if !d.theta_min.is_finite() || !(0.0..=1.0).contains(&d.theta_min) {
        return Err(Error::config("defense.theta_min", "must lie in [0, 1]"));
    }
    if !d.initial_trust.is_finite() || !(0.0..=1.0).contains(&d.initial_trust) {
        return Err(Error::config("defense.initial_trust", "must lie in [0, 1]"));
    }
    let defense = DefenseSettings {
        enabled: d.enabled,
        tau: d.tau,
        alpha: d.alpha,
        beta: d.beta,
        theta_min: d.theta_min,
        initial_trust: d.initial_trust,
    };

    Ok(ExperimentConfig {
        seed: raw.seed,
        rounds: raw.rounds,
        client_fraction: raw.client_fraction,
        eval_n: raw.eval_n,
        out: raw.out.map(PathBuf::from),
        population,
        partition,
        model,
        train,
        privacy,
        compression,
        rule,
        attack,
        transport,
        defense,
    })
}

fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "override key has an empty path segment"));
    }
    let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut current = table;
    for segment in &path[..path.len() - 1] {
        let entry = current
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            Error::config(key, format!("'{segment}' is a value, not a table"))
        })?;
    }
    current.insert(path[path.len() - 1].to_string(), parsed);
    Ok(())
}

/// Parses and validates a config document, applying `key=value` overrides
/// (dotted paths) on top of the file contents first.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::config("--set", format!("expected key=value, got '{item}'"))
        })?;
        apply_override(&mut table, key.trim(), value.trim())?;
    }
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
    validate(raw)
}

/// Reads, parses, and validates a config file (see [`parse_config_str`]).
pub fn parse_config_file(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, &[])
    }

    #[test]
    fn empty_document_yields_documented_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.rounds, 10);
        assert_eq!(cfg.client_fraction, 1.0);
        assert_eq!(cfg.population.n_total(), 2000);
        assert_eq!(cfg.population.d(), 10);
        assert_eq!(cfg.partition.n_clients(), 10);
        assert_eq!(cfg.model.param_dim(), 11);
        assert!(!cfg.privacy.enabled());
        assert!(cfg.compression.is_none());
        assert_eq!(cfg.rule, AggregationRule::Mean);
        assert_eq!(cfg.attack.variant, AttackVariant::None);
        assert!(cfg.defense.enabled);
        assert_eq!(cfg.defense.tau, 3.0);
        assert_eq!(cfg.defense.theta_min, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = parse("[privacy]\nepsilonn = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("epsilonn"), "{err}");
    }

    #[test]
    fn negative_epsilon_is_rejected_with_field() {
        let err = parse("[privacy]\nmode = \"analytic\"\nepsilon = -1.0\n").unwrap_err();
        match err {
            Error::ConfigInvalid { field, reason } => {
                assert_eq!(field, "privacy.epsilon");
                assert!(reason.contains("positive"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn integer_literals_coerce_to_floats() {
        let cfg = parse("[privacy]\nmode = \"simple\"\nepsilon = 2\nclip_norm = 1\n").unwrap();
        let params = cfg.privacy.params_for(ClientId(0)).unwrap();
        assert_eq!(params.epsilon(), 2.0);
        assert_eq!(params.clip_norm(), 1.0);
    }

    #[test]
    fn rule_strings_parse_and_roundtrip() {
        for text in ["mean", "coord_median", "trimmed_mean(3)", "multi_krum(1,2)"] {
            let rule = parse_rule(text).unwrap();
            assert_eq!(rule.to_string(), text);
        }
        assert!(parse_rule("median").is_err());
        assert!(parse_rule("trimmed_mean(x)").is_err());
        assert!(parse_rule("multi_krum(1)").is_err());
    }

    #[test]
    fn infeasible_rule_for_enrollment_is_rejected() {
        let err = parse("[aggregation]\nrule = \"trimmed_mean(5)\"\n").unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid { ref field, .. } if field == "aggregation.rule"));
        assert!(parse("[aggregation]\nrule = \"multi_krum(8,1)\"\n").is_err());
        assert!(parse("[aggregation]\nrule = \"multi_krum(2,8)\"\n").is_ok());
        assert!(parse("[aggregation]\nrule = \"multi_krum(2,9)\"\n").is_err());
    }

    #[test]
    fn attack_requires_variant_parameters() {
        assert!(parse("[attack]\nvariant = \"scale_update\"\nattacker_ids = [0]\n").is_err());
        let cfg =
            parse("[attack]\nvariant = \"scale_update\"\nattacker_ids = [0]\nfactor = 50\n")
                .unwrap();
        assert_eq!(cfg.attack.variant, AttackVariant::ScaleUpdate { factor: 50.0 });
        assert!(cfg.attack.is_attacker(ClientId(0)));
        assert!(!cfg.attack.is_attacker(ClientId(1)));
    }

    #[test]
    fn attacker_ids_must_be_enrolled() {
        let err = parse("[attack]\nvariant = \"label_flip\"\nfrac = 0.5\nattacker_ids = [10]\n")
            .unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid { ref field, .. } if field == "attack.attacker_ids"));
    }

    #[test]
    fn poison_shift_must_match_dimension() {
        let text = "[attack]\nvariant = \"data_poison\"\nfrac = 0.5\ntarget_shift = [1.0]\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn tamper_settings_must_pair() {
        assert!(parse("[transport]\ntamper_index = 0\n").is_err());
        let cfg = parse("[transport]\ntamper_index = 0\ntamper_value = 255\n").unwrap();
        assert_eq!(cfg.transport.tamper, Some(TamperRule { index: 0, value: 255 }));
        assert!(parse("[transport]\ntamper_index = 1000\ntamper_value = 0\n").is_err());
    }

    #[test]
    fn per_client_overrides_are_validated() {
        let text = "[privacy]\nmode = \"analytic\"\n[privacy.per_client_epsilon]\n\"3\" = 0.5\n";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.privacy.params_for(ClientId(3)).unwrap().epsilon(), 0.5);
        assert_eq!(cfg.privacy.params_for(ClientId(4)).unwrap().epsilon(), 1.0);
        assert!(parse("[privacy]\nmode = \"analytic\"\n[privacy.per_client_epsilon]\n\"99\" = 0.5\n").is_err());
        assert!(parse("[privacy]\nmode = \"analytic\"\n[privacy.per_client_epsilon]\n\"abc\" = 0.5\n").is_err());
    }

    #[test]
    fn overrides_take_effect_and_parse_types() {
        let overrides = vec![
            "privacy.mode=analytic".to_string(),
            "privacy.epsilon=2".to_string(),
            "attack.variant=random_update".to_string(),
            "attack.sigma_a=1.5".to_string(),
            "attack.attacker_ids=[7, 9]".to_string(),
            "rounds=3".to_string(),
        ];
        let cfg = parse_config_str("", &overrides).unwrap();
        assert_eq!(cfg.rounds, 3);
        assert!(cfg.privacy.enabled());
        assert_eq!(cfg.privacy.params_for(ClientId(0)).unwrap().epsilon(), 2.0);
        assert_eq!(cfg.attack.variant, AttackVariant::RandomUpdate { sigma_a: 1.5 });
        assert_eq!(
            cfg.attack.attacker_ids.iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![7, 9]
        );
    }

    #[test]
    fn malformed_override_is_rejected() {
        assert!(parse_config_str("", &["rounds".to_string()]).is_err());
        assert!(parse_config_str("", &["privacy.epsilon.x=1".to_string()]).is_err());
    }

    #[test]
    fn compression_requires_a_transform() {
        assert!(parse("[compression]\nenabled = true\n").is_err());
        let cfg = parse("[compression]\nenabled = true\ntop_k = 5\n").unwrap();
        assert_eq!(
            cfg.compression,
            Some(CompressionSettings {
                top_k: Some(5),
                quantize_bits: None,
                quantize_range: 1.0
            })
        );
        assert!(parse("[compression]\nenabled = true\ntop_k = 50\n").is_err());
        assert!(parse("[compression]\nenabled = true\nquantize_bits = 40\n").is_err());
    }

    #[test]
    fn budgets_are_validated_when_privacy_is_on() {
        assert!(parse("[privacy]\nmode = \"analytic\"\neps_budget = 0\n").is_err());
        assert!(parse("[privacy]\nmode = \"analytic\"\ndelta_budget = 2.0\n").is_err());
        let cfg = parse("[privacy]\nmode = \"analytic\"\neps_budget = 3.0\n").unwrap();
        let ledger = cfg.privacy.ledger();
        assert_eq!(ledger.eps_budget(), 3.0);
        assert_eq!(ledger.delta_budget(), 1.0);
    }
}
