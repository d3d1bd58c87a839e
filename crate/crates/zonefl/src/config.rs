//! Config-file loading and the partition-file text format.
//!
//! Scenario configs are TOML documents mirroring [`ScenarioConfig`]; every
//! key is optional except `rounds`. Partition files are plain text, one
//! directive per line:
//!
//! ```text
//! # comment
//! zone 0 Downtown
//! zone 1
//! edge 0 1
//! ```
//!
//! Zone names are optional and default to `Z<id>`.

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, Strategy};
use crate::topology::ZoneId;
use std::path::Path;

/// CLI-level overrides; each one, when set, supersedes the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(s) = self.strategy {
            config.strategy = s;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(rounds) = self.rounds {
            config.rounds = rounds;
        }
    }
}

/// Parses and validates a TOML scenario config. `rounds` is the one field
/// with no default and must be present in the file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let value: toml::Value = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("config parse error: {e}")))?;
    let table = value
        .as_table()
        .ok_or_else(|| Error::Config("config root must be a table".into()))?;
    if !table.contains_key("rounds") {
        return Err(Error::Config("missing required field `rounds`".into()));
    }
    let config: ScenarioConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("config error: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&text)
}

/// Parses the partition text format: `zone <id> [name]` and `edge <a> <b>`
/// directives, `#` comments, blank lines ignored.
pub fn parse_partition_text(text: &str) -> Result<(Vec<(ZoneId, String)>, Vec<(ZoneId, ZoneId)>)> {
    let mut zones = Vec::new();
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let directive = parts.next().unwrap();
        let parse_id = |tok: Option<&str>| -> Result<u64> {
            let tok = tok.ok_or_else(|| {
                Error::Config(format!("partition line {}: missing zone id", lineno + 1))
            })?;
            tok.parse().map_err(|_| {
                Error::Config(format!("partition line {}: invalid zone id '{tok}'", lineno + 1))
            })
        };
        match directive {
            "zone" => {
                let id = parse_id(parts.next())?;
                let name = parts.next().map(str::to_string).unwrap_or_else(|| format!("Z{id}"));
                zones.push((ZoneId(id), name));
            }
            "edge" => {
                let a = parse_id(parts.next())?;
                let b = parse_id(parts.next())?;
                edges.push((ZoneId(a), ZoneId(b)));
            }
            other => {
                return Err(Error::Config(format!(
                    "partition line {}: unknown directive '{other}'",
                    lineno + 1
                )));
            }
        }
    }
    if zones.is_empty() {
        return Err(Error::Config("partition file declares no zones".into()));
    }
    Ok((zones, edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_needs_only_rounds() {
        let config = parse_config("rounds = 10").unwrap();
        assert_eq!(config.rounds, 10);
        assert_eq!(config, ScenarioConfig { rounds: 10, ..Default::default() });
    }

    #[test]
    fn missing_rounds_is_named_in_the_error() {
        let err = parse_config("seed = 3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rounds"), "error should name the field: {msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("rounds = 5\nbogus_key = 1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
            rounds = 50
            seed = 9
            strategy = "zgd"
            heterogeneity = 0.5
            noise_std = 0.2
            n_clients = 20
            feature_dim = 4
            samples_per_client_zone = 25

            [zones]
            rows = 2
            cols = 3

            [mobility]
            zone_count_probs = [0.7, 0.3]

            [round]
            local_learning_rate = 0.01

            [zms]
            merge_cadence = 10

            [zgd]
            lambda = 0.9
        "#;
        let config = parse_config(text).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.strategy, Strategy::Zgd);
        assert_eq!(config.round.local_learning_rate, 0.01);
        assert_eq!(config.zms.merge_cadence, 10);
        assert_eq!(config.zgd.lambda, 0.9);
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(parse_config("rounds = 0").is_err());
        assert!(parse_config("rounds = 5\nnoise_std = -1.0").is_err());
        assert!(parse_config("rounds = 5\n[mobility]\nzone_count_probs = [0.9]").is_err());
    }

    #[test]
    fn overrides_supersede_config_values() {
        let mut config = parse_config("rounds = 10\nseed = 1").unwrap();
        let overrides = Overrides {
            strategy: Some(Strategy::Zms),
            seed: Some(42),
            rounds: None,
        };
        overrides.apply(&mut config);
        assert_eq!(config.strategy, Strategy::Zms);
        assert_eq!(config.seed, 42);
        assert_eq!(config.rounds, 10);
    }

    #[test]
    fn partition_text_parses_zones_edges_names_and_comments() {
        let text = "# map\nzone 0 Downtown\nzone 1\nedge 0 1 # adjacent\n";
        let (zones, edges) = parse_partition_text(text).unwrap();
        assert_eq!(
            zones,
            vec![(ZoneId(0), "Downtown".to_string()), (ZoneId(1), "Z1".to_string())]
        );
        assert_eq!(edges, vec![(ZoneId(0), ZoneId(1))]);
    }

    #[test]
    fn partition_text_rejects_garbage() {
        assert!(parse_partition_text("region 0").is_err());
        assert!(parse_partition_text("zone x").is_err());
        assert!(parse_partition_text("edge 0").is_err());
        assert!(parse_partition_text("").is_err());
    }
}
