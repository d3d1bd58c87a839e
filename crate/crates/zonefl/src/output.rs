//! Result-file writing: fixed, versioned schemas written atomically
//! (temp file + rename) so interrupted runs never leave truncated files.
//!
//! A run directory contains:
//! - `rounds.csv` — one row per round per zone
//! - `events.jsonl` — one JSON object per merge/split event
//! - `summary.json` — final metrics, planted truths, message totals
//! - `attention.csv` — ZGD attention coefficients (when dumped)
//! - `manifest.json` — config hash, seed, versions, timestamps
//! - `failure.json` — present only when a run stopped on a numeric failure
//!
//! All files except `manifest.json` are byte-identical across reruns of the
//! same config and seed; the manifest carries the wall-clock timestamps.

pub const SCHEMA_VERSION: u32 = 1;
pub const ROUNDS_CSV_HEADER: &str =
    "round,zone_id,partition_version,train_loss,validation_loss,messages";
pub const ATTENTION_CSV_HEADER: &str = "round,zone_id,neighbor_id,beta";

use crate::error::Result;
use crate::scenario::Strategy;
use crate::sim::{client_zone_counts, StrategyResult};
use crate::topology::ZoneId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Writes `bytes` to `path` atomically: the content lands in a temp file in
/// the same directory and is renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = dir.join(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rounds_csv(result: &StrategyResult) -> String {
    let mut out = String::from(ROUNDS_CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.round,
            row.zone_id.0,
            row.partition_version,
            fmt_opt(row.train_loss),
            fmt_opt(row.validation_loss),
            row.messages
        ));
    }
    out
}

pub fn events_jsonl(result: &StrategyResult) -> String {
    let mut out = String::new();
    for event in &result.events {
        out.push_str(&serde_json::to_string(event).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn attention_csv(result: &StrategyResult) -> String {
    let mut out = String::from(ATTENTION_CSV_HEADER);
    out.push('\n');
    for row in &result.attention {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.round, row.zone_id.0, row.neighbor_id.0, row.beta
        ));
    }
    out
}

/// The summary document: everything needed for post-hoc checks without
/// re-running, including the planted truths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub seed: u64,
    pub rounds: u64,
    pub dataset_hash: String,
    pub metric_name: String,
    pub final_metric: f64,
    pub per_user_metric: Vec<(u32, f64)>,
    pub server_load_fraction: f64,
    pub server_load_fraction_ledger: f64,
    pub total_training_messages: u64,
    pub total_validation_messages: u64,
    pub final_active_zones: Vec<ZoneId>,
    pub final_partition_version: u64,
    pub client_zone_counts: BTreeMap<u32, u64>,
    pub merge_events: usize,
    pub split_events: usize,
    pub zones_without_clients: usize,
    pub planted_truth: BTreeMap<u64, PlantedZoneTruth>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedZoneTruth {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn summary(result: &StrategyResult, clients_hint: Option<&[crate::model::ClientDataset]>) -> Summary {
    use crate::zms::ZmsEvent;
    let counts = clients_hint
        .map(|clients| {
            client_zone_counts(&result.final_partition, clients)
                .into_iter()
                .map(|(c, k)| (c.0, k))
                .collect()
        })
        .unwrap_or_default();
    Summary {
        schema_version: SCHEMA_VERSION,
        strategy: result.strategy,
        seed: result.seed,
        rounds: result.rounds,
        dataset_hash: result.dataset_hash.clone(),
        metric_name: result.metric_name.to_string(),
        final_metric: result.final_metric,
        per_user_metric: result.per_user_metric.iter().map(|(c, m)| (c.0, *m)).collect(),
        server_load_fraction: result.server_load_fraction,
        server_load_fraction_ledger: result.server_load_fraction_ledger,
        total_training_messages: result.total_training_messages,
        total_validation_messages: result.total_validation_messages,
        final_active_zones: result.final_partition.active_zones(),
        final_partition_version: result.final_partition.version(),
        client_zone_counts: counts,
        merge_events: result
            .events
            .iter()
            .filter(|e| matches!(e, ZmsEvent::Merge { .. }))
            .count(),
        split_events: result
            .events
            .iter()
            .filter(|e| matches!(e, ZmsEvent::Split { .. }))
            .count(),
        zones_without_clients: result.zones_without_clients.len(),
        planted_truth: result
            .truth
            .per_zone
            .iter()
            .map(|(z, p)| (z.0, PlantedZoneTruth { weights: p.weights.clone(), bias: p.bias }))
            .collect(),
        failure: result.failure.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// SHA-256 of the config file bytes as given, recorded verbatim.
    pub config_sha256: String,
    pub seed: u64,
    pub strategy: Strategy,
    /// CLI overrides that superseded config values, as `key=value` strings.
    pub overrides: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub output_files: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes every result file for a run into `dir` and returns the paths
/// written. The manifest is written last so its `output_files` list is
/// complete and its timestamps bracket the file writes.
pub fn write_run_outputs(
    dir: &Path,
    result: &StrategyResult,
    summary_doc: &Summary,
    mut manifest: RunManifest,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let emit = |name: &str, bytes: Vec<u8>| -> Result<PathBuf> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        Ok(path)
    };
    written.push(emit("rounds.csv", rounds_csv(result).into_bytes())?);
    written.push(emit("events.jsonl", events_jsonl(result).into_bytes())?);
    let summary_json = serde_json::to_vec_pretty(summary_doc).expect("summary serializes");
    written.push(emit("summary.json", summary_json)?);
    if !result.attention.is_empty() {
        written.push(emit("attention.csv", attention_csv(result).into_bytes())?);
    }
    if let Some(failure) = &result.failure {
        let marker = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "failure": failure,
            "rows_flushed": result.rows.len(),
        });
        written.push(emit("failure.json", serde_json::to_vec_pretty(&marker).unwrap())?);
    }
    manifest.output_files = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    manifest.finished_unix_ms = now_unix_ms();
    let manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    written.push(emit("manifest.json", manifest_json)?);
    Ok(written)
}

pub fn now_unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{MobilityConfig, ScenarioConfig, ZoneLayout};
    use crate::sim::run_strategy;

    fn tiny_result() -> StrategyResult {
        let config = ScenarioConfig {
            rounds: 4,
            n_clients: 6,
            feature_dim: 3,
            samples_per_client_zone: 10,
            zones: ZoneLayout::Grid { rows: 1, cols: 2 },
            mobility: MobilityConfig { zone_count_probs: vec![1.0], zone_weights: Vec::new() },
            ..Default::default()
        };
        run_strategy(&config, Strategy::StaticZoneFl).unwrap()
    }

    #[test]
    fn rounds_csv_has_fixed_header_and_row_count() {
        let result = tiny_result();
        let csv = rounds_csv(&result);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), ROUNDS_CSV_HEADER);
        assert_eq!(lines.count(), result.rows.len());
    }

    #[test]
    fn atomic_write_replaces_content_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn run_outputs_are_byte_identical_across_reruns_except_manifest() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for dir in [dir_a.path(), dir_b.path()] {
            let result = tiny_result();
            let doc = summary(&result, None);
            let manifest = RunManifest {
                schema_version: SCHEMA_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_sha256: sha256_hex(b"cfg"),
                seed: result.seed,
                strategy: result.strategy,
                overrides: Vec::new(),
                started_unix_ms: now_unix_ms(),
                finished_unix_ms: 0,
                output_files: Vec::new(),
            };
            write_run_outputs(dir, &result, &doc, manifest).unwrap();
        }
        for name in ["rounds.csv", "events.jsonl", "summary.json"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn summary_round_trips_through_json() {
        let result = tiny_result();
        let doc = summary(&result, None);
        let text = serde_json::to_string(&doc).unwrap();
        let back: Summary = serde_json::from_str(&text).unwrap();
        assert_eq!(back.final_metric, doc.final_metric);
        assert_eq!(back.planted_truth.len(), 2);
    }
}
