//! On-disk scenario schema.
//!
//! Scenarios are JSON documents mirroring [`Scenario`], versioned through a
//! mandatory `schema_version` field. Unknown fields are rejected so typos
//! fail loudly instead of silently running a different experiment. All
//! numeric protocol parameters are exact: write them as integers or as
//! strings like `"9/10"` / `"0.9"` — JSON floats are refused because they
//! cannot round-trip exactly.

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use shardsim_core::oracle::OracleBehavior;
use shardsim_core::rational::{parse_rational, rat_int, Rational};
use shardsim_core::shard::VerdictPolicy;
use shardsim_core::sim::{ClusterSpec, OracleSpec, RewardScheduleSpec, Scenario};

/// The schema understood by this build of the tool.
pub const SCHEMA_VERSION: u64 = 1;

/// An exact number parsed from JSON: an integer, or a string holding an
/// integer, fraction (`"2/3"`) or decimal (`"0.9"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactNumber(pub Rational);

impl<'de> Deserialize<'de> for ExactNumber {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: Deserializer<'de>,
    {
        struct ExactVisitor;

        impl<'de> Visitor<'de> for ExactVisitor {
            type Value = ExactNumber;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("an integer, or an exact number as a string like \"2/3\" or \"0.9\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(ExactNumber(rat_int(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(ExactNumber(Rational::from_integer(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Err(E::custom(format!(
                    "float {v} is not exact; write it as a string like \"{v}\" instead"
                )))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                parse_rational(v)
                    .map(ExactNumber)
                    .map_err(|e| E::custom(format!("bad number {v:?}: {e}")))
            }
        }

        deserializer.deserialize_any(ExactVisitor)
    }
}

fn exact_zero() -> ExactNumber {
    ExactNumber(rat_int(0))
}

fn exact_one() -> ExactNumber {
    ExactNumber(rat_int(1))
}

fn exact_ten() -> ExactNumber {
    ExactNumber(rat_int(10))
}

fn exact_hundred() -> ExactNumber {
    ExactNumber(rat_int(100))
}

fn default_delta_t() -> u64 {
    10
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterEntry {
    pub size: u32,
    #[serde(default)]
    pub always_flip: u32,
    #[serde(default)]
    pub random_flip: Vec<ExactNumber>,
    #[serde(default)]
    pub offline: u32,
    #[serde(default = "exact_ten")]
    pub device_deposit: ExactNumber,
    #[serde(default = "exact_hundred")]
    pub device_balance: ExactNumber,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleEntry {
    pub accuracy: ExactNumber,
    #[serde(default)]
    pub adversarial: bool,
    #[serde(default = "exact_ten")]
    pub deposit: ExactNumber,
    #[serde(default = "exact_hundred")]
    pub balance: ExactNumber,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictPolicyField {
    #[default]
    Unanimous,
    ClusterMajority,
}

/// The JSON document, field for field.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u64,
    #[serde(default)]
    pub seed: u64,
    pub ticks: u64,
    #[serde(default)]
    pub clusters: Vec<ClusterEntry>,
    #[serde(default)]
    pub oracles: Vec<OracleEntry>,
    #[serde(default)]
    pub committee_size: usize,
    #[serde(default)]
    pub tx_rate: u32,
    #[serde(default)]
    pub claim_rate: u32,
    #[serde(default = "default_delta_t")]
    pub delta_t: u64,
    #[serde(default = "exact_zero")]
    pub invalid_tx_fraction: ExactNumber,
    #[serde(default = "exact_zero")]
    pub total_tx_reward: ExactNumber,
    #[serde(default)]
    pub portion_rewards: Vec<ExactNumber>,
    #[serde(default = "exact_one")]
    pub penalty_fraction: ExactNumber,
    #[serde(default = "exact_one")]
    pub oracle_reward: ExactNumber,
    #[serde(default)]
    pub byzantine_waiver: bool,
    #[serde(default)]
    pub verdict_policy: VerdictPolicyField,
    #[serde(default)]
    pub split_among_all: bool,
    #[serde(default = "default_true")]
    pub reward_rejected: bool,
}

/// Parses a scenario document, reporting errors with the path of the
/// offending field (for example `oracles[1].accuracy`).
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| e.to_string())?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "schema_version: this tool supports version {SCHEMA_VERSION}, file declares {}",
            file.schema_version
        ));
    }
    Ok(file)
}

impl ScenarioFile {
    /// Lowers the document into the simulator's scenario type.
    pub fn to_scenario(&self) -> Scenario {
        let mut s = Scenario::quiet(self.seed, self.ticks);
        s.clusters = self
            .clusters
            .iter()
            .map(|c| ClusterSpec {
                size: c.size,
                always_flip: c.always_flip,
                random_flip: c.random_flip.iter().map(|r| r.0.clone()).collect(),
                offline: c.offline,
                device_deposit: c.device_deposit.0.clone(),
                device_balance: c.device_balance.0.clone(),
            })
            .collect();
        s.oracle_pool = self
            .oracles
            .iter()
            .map(|o| OracleSpec {
                accuracy: o.accuracy.0.clone(),
                behavior: if o.adversarial {
                    OracleBehavior::Adversarial
                } else {
                    OracleBehavior::Calibrated
                },
                deposit: o.deposit.0.clone(),
                balance: o.balance.0.clone(),
            })
            .collect();
        s.committee_size = self.committee_size;
        s.tx_rate = self.tx_rate;
        s.claim_rate = self.claim_rate;
        s.reward_schedule = RewardScheduleSpec {
            total_tx_reward: self.total_tx_reward.0.clone(),
            portion_rewards: self.portion_rewards.iter().map(|r| r.0.clone()).collect(),
            penalty_fraction: self.penalty_fraction.0.clone(),
        };
        s.delta_t = self.delta_t;
        s.invalid_tx_fraction = self.invalid_tx_fraction.0.clone();
        s.oracle_reward = self.oracle_reward.0.clone();
        s.byzantine_waiver = self.byzantine_waiver;
        s.verdict_policy = match self.verdict_policy {
            VerdictPolicyField::Unanimous => VerdictPolicy::Unanimous,
            VerdictPolicyField::ClusterMajority => VerdictPolicy::ClusterMajority,
        };
        s.split_among_all = self.split_among_all;
        s.reward_rejected = self.reward_rejected;
        s
    }
}

/// Every key accepted by `--override` and `sweep --parameter`.
pub const PARAMETERS: &[&str] = &[
    "seed",
    "ticks",
    "tx_rate",
    "claim_rate",
    "committee_size",
    "delta_t",
    "invalid_tx_fraction",
    "penalty_fraction",
    "total_tx_reward",
    "oracle_reward",
    "dishonest",
    "q",
];

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("parameter `{key}`: expected an integer, got {value:?}"))
}

fn parse_exact(key: &str, value: &str) -> Result<Rational, String> {
    parse_rational(value).map_err(|e| format!("parameter `{key}`: bad number {value:?}: {e}"))
}

/// Applies one `key=value` style parameter to a parsed scenario.
///
/// `dishonest` sets the always-flip count of every cluster and `q` sets the
/// accuracy of every oracle; all other keys overwrite the matching scalar
/// field. Unknown keys are an error listing the accepted names.
pub fn apply_parameter(file: &mut ScenarioFile, key: &str, value: &str) -> Result<(), String> {
    match key {
        "seed" => file.seed = parse_int(key, value)?,
        "ticks" => file.ticks = parse_int(key, value)?,
        "tx_rate" => file.tx_rate = parse_int(key, value)?,
        "claim_rate" => file.claim_rate = parse_int(key, value)?,
        "committee_size" => file.committee_size = parse_int(key, value)?,
        "delta_t" => file.delta_t = parse_int(key, value)?,
        "invalid_tx_fraction" => file.invalid_tx_fraction = ExactNumber(parse_exact(key, value)?),
        "penalty_fraction" => file.penalty_fraction = ExactNumber(parse_exact(key, value)?),
        "total_tx_reward" => file.total_tx_reward = ExactNumber(parse_exact(key, value)?),
        "oracle_reward" => file.oracle_reward = ExactNumber(parse_exact(key, value)?),
        "dishonest" => {
            let count: u32 = parse_int(key, value)?;
            for cluster in &mut file.clusters {
                cluster.always_flip = count;
            }
        }
        "q" => {
            let q = parse_exact(key, value)?;
            for oracle in &mut file.oracles {
                oracle.accuracy = ExactNumber(q.clone());
            }
        }
        _ => {
            return Err(format!(
                "unknown parameter `{key}`; accepted parameters: {}",
                PARAMETERS.join(", ")
            ))
        }
    }
    Ok(())
}

/// Splits a `--override key=value` argument.
pub fn split_override(arg: &str) -> Result<(&str, &str), String> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| format!("override {arg:?} is not of the form key=value"))
}

/// Parses a sweep value list: either an inclusive integer range `a..b` or a
/// comma-separated list of values.
pub fn parse_sweep_values(spec: &str) -> Result<Vec<String>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err("empty sweep value list".to_string());
    }
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad range bound {:?} in {spec:?}", lo.trim()))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|_| format!("bad range bound {:?} in {spec:?}", hi.trim()))?;
        if lo > hi {
            return Err(format!("empty range {spec:?}"));
        }
        return Ok((lo..=hi).map(|v| v.to_string()).collect());
    }
    let values: Vec<String> = spec.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(|v| v.is_empty()) {
        return Err(format!("empty value in list {spec:?}"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use shardsim_core::rational::rat;

    fn minimal(extra: &str) -> String {
        format!(r#"{{"schema_version": 1, "ticks": 5{extra}}}"#)
    }

    #[test]
    fn minimal_document_parses_with_defaults() {
        let file = parse_scenario_file(&minimal("")).unwrap();
        assert_eq!(file.ticks, 5);
        assert_eq!(file.seed, 0);
        assert_eq!(file.delta_t, 10);
        assert_eq!(file.penalty_fraction.0, rat_int(1));
        assert!(file.reward_rejected);
        let scenario = file.to_scenario();
        assert!(shardsim_core::sim::validate_scenario(&scenario).is_empty());
    }

    #[test]
    fn unknown_fields_are_named_in_the_error() {
        let err = parse_scenario_file(&minimal(r#", "tick_rate": 3"#)).unwrap_err();
        assert!(err.contains("tick_rate"), "{err}");
    }

    #[test]
    fn floats_are_rejected_with_the_field_path() {
        let err = parse_scenario_file(&minimal(
            r#", "oracles": [{"accuracy": 0.9}], "claim_rate": 1, "committee_size": 1"#,
        ))
        .unwrap_err();
        assert!(err.contains("oracles[0].accuracy"), "{err}");
        assert!(err.contains("not exact"), "{err}");
    }

    #[test]
    fn exact_numbers_accept_strings_and_integers() {
        let file = parse_scenario_file(&minimal(
            r#", "invalid_tx_fraction": "1/4", "total_tx_reward": 300, "penalty_fraction": "0.5""#,
        ))
        .unwrap();
        assert_eq!(file.invalid_tx_fraction.0, rat(1, 4));
        assert_eq!(file.total_tx_reward.0, rat_int(300));
        assert_eq!(file.penalty_fraction.0, rat(1, 2));
    }

    #[test]
    fn wrong_schema_version_is_refused() {
        let err = parse_scenario_file(r#"{"schema_version": 2, "ticks": 1}"#).unwrap_err();
        assert!(err.contains("schema_version"), "{err}");
    }

    #[test]
    fn overrides_reach_their_targets() {
        let mut file = parse_scenario_file(&minimal(
            r#", "clusters": [{"size": 9}, {"size": 6}], "oracles": [{"accuracy": "0.9"}]"#,
        ))
        .unwrap();
        apply_parameter(&mut file, "seed", "99").unwrap();
        apply_parameter(&mut file, "dishonest", "2").unwrap();
        apply_parameter(&mut file, "q", "3/4").unwrap();
        assert_eq!(file.seed, 99);
        assert!(file.clusters.iter().all(|c| c.always_flip == 2));
        assert_eq!(file.oracles[0].accuracy.0, rat(3, 4));

        let err = apply_parameter(&mut file, "qq", "1").unwrap_err();
        assert!(err.contains("unknown parameter `qq`"), "{err}");
        let err = apply_parameter(&mut file, "ticks", "soon").unwrap_err();
        assert!(err.contains("ticks"), "{err}");
    }

    #[test]
    fn sweep_values_parse_ranges_and_lists() {
        assert_eq!(
            parse_sweep_values("0..3").unwrap(),
            vec!["0", "1", "2", "3"]
        );
        assert_eq!(
            parse_sweep_values("0.5, 0.7, 0.9").unwrap(),
            vec!["0.5", "0.7", "0.9"]
        );
        assert!(parse_sweep_values("").is_err());
        assert!(parse_sweep_values("5..1").is_err());
        assert!(parse_sweep_values("1,,2").is_err());
    }
}
