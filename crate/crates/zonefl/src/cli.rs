//! The `zonefl` command-line front end: config-driven runs, paired strategy
//! comparison, and the self-check suite.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric failure, 4 selfcheck
//! failure.

use crate::config::{load_config, Overrides};
use crate::error::Error;
use crate::output::{
    now_unix_ms, sha256_hex, summary, write_atomic, write_run_outputs, RunManifest,
    SCHEMA_VERSION,
};
use crate::scenario::{ScenarioConfig, Strategy};
use crate::selfcheck::run_selfcheck;
use crate::sim::{run_strategy, StrategyResult};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_SELFCHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "zonefl",
    version,
    about = "Zone-based federated learning simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy from a scenario config and write result files.
    Run(RunArgs),
    /// Run all four strategies paired over a seed set and write a summary table.
    Compare(CompareArgs),
    /// Run the numerical/structural oracle suite.
    Selfcheck,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario config (TOML).
    pub config: PathBuf,
    /// Override the config's strategy (global_fl, static_zone_fl, zms, zgd).
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's round count.
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Output directory (default: runs/<strategy>-seed<seed>, or $ZONEFL_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario config (TOML).
    pub config: PathBuf,
    /// Number of paired seeds, starting at the config's seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Output directory (default: runs/compare, or $ZONEFL_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::NumericFailure { .. } => EXIT_NUMERIC,
        _ => 1,
    }
}

fn out_dir(flag: Option<PathBuf>, default: impl FnOnce() -> PathBuf) -> PathBuf {
    flag.or_else(|| std::env::var_os("ZONEFL_OUT").map(PathBuf::from))
        .unwrap_or_else(default)
}

fn manifest_for(
    config_bytes: &[u8],
    config: &ScenarioConfig,
    overrides: &[String],
) -> RunManifest {
    RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(config_bytes),
        seed: config.seed,
        strategy: config.strategy,
        overrides: overrides.to_vec(),
        started_unix_ms: now_unix_ms(),
        finished_unix_ms: 0,
        output_files: Vec::new(),
    }
}

pub fn cmd_run(args: RunArgs) -> i32 {
    let config_bytes = match std::fs::read(&args.config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let overrides = Overrides { strategy: args.strategy, seed: args.seed, rounds: args.rounds };
    let mut override_notes = Vec::new();
    if let Some(s) = overrides.strategy {
        override_notes.push(format!("strategy={}", s.as_str()));
    }
    if let Some(s) = overrides.seed {
        override_notes.push(format!("seed={s}"));
    }
    if let Some(r) = overrides.rounds {
        override_notes.push(format!("rounds={r}"));
    }
    overrides.apply(&mut config);
    if let Err(e) = config.validate() {
        eprintln!("config error: {e}");
        return EXIT_CONFIG;
    }
    let dir = out_dir(args.out, || {
        PathBuf::from("runs").join(format!("{}-seed{}", config.strategy.as_str(), config.seed))
    });
    let result = match run_strategy(&config, config.strategy) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return exit_code_for(&e);
        }
    };
    let clients = match crate::scenario::generate_scenario(&config) {
        Ok((clients, _, _)) => clients,
        Err(e) => {
            eprintln!("run failed: {e}");
            return exit_code_for(&e);
        }
    };
    let doc = summary(&result, Some(&clients));
    let manifest = manifest_for(&config_bytes, &config, &override_notes);
    if let Err(e) = write_run_outputs(&dir, &result, &doc, manifest) {
        eprintln!("write failed: {e}");
        return 1;
    }
    println!(
        "{} seed {} rounds {}: final {} {:.6} -> {}",
        config.strategy.as_str(),
        config.seed,
        config.rounds,
        result.metric_name,
        result.final_metric,
        dir.display()
    );
    if let Some(failure) = &result.failure {
        eprintln!("numeric failure: {failure} (partial results flushed)");
        return EXIT_NUMERIC;
    }
    EXIT_OK
}

/// Per-strategy aggregate over the paired seed set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareRow {
    pub strategy: Strategy,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    /// Improvement relative to the Global FL mean (the baseline value in the
    /// denominator).
    pub gain_vs_baseline_pct: f64,
    /// Improvement with the strategy's own mean in the denominator.
    pub gain_vs_strategy_pct: f64,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Improvement of `value` over `baseline` in the metric's better direction:
/// lower is better for RMSE, higher for accuracy.
pub fn improvement(metric: &str, baseline: f64, value: f64) -> f64 {
    if metric == "accuracy" {
        value - baseline
    } else {
        baseline - value
    }
}

pub fn compare_rows(
    metric: &str,
    per_strategy: &[(Strategy, Vec<f64>)],
) -> Vec<CompareRow> {
    let baseline_mean = per_strategy
        .iter()
        .find(|(s, _)| *s == Strategy::GlobalFl)
        .map(|(_, v)| mean_sd(v).0)
        .expect("global baseline present");
    per_strategy
        .iter()
        .map(|(strategy, values)| {
            let (mean, sd) = mean_sd(values);
            let imp = improvement(metric, baseline_mean, mean);
            CompareRow {
                strategy: *strategy,
                metric: metric.to_string(),
                mean,
                sd,
                gain_vs_baseline_pct: imp / baseline_mean * 100.0,
                gain_vs_strategy_pct: imp / mean * 100.0,
            }
        })
        .collect()
}

pub fn cmd_compare(args: CompareArgs) -> i32 {
    if args.seeds < 5 {
        eprintln!("config error: compare needs at least 5 seeds, got {}", args.seeds);
        return EXIT_CONFIG;
    }
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir = out_dir(args.out, || PathBuf::from("runs").join("compare"));
    // fan the strategy × seed grid out over worker threads; each run is
    // internally deterministic, results are merged in grid order
    let mut runs: Vec<(Strategy, u64, Result<StrategyResult, Error>)> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &strategy in &Strategy::ALL {
            for i in 0..args.seeds {
                let mut c = config.clone();
                c.seed = config.seed + i;
                handles.push((
                    strategy,
                    c.seed,
                    scope.spawn(move || run_strategy(&c, strategy)),
                ));
            }
        }
        for (strategy, seed, handle) in handles {
            runs.push((strategy, seed, handle.join().expect("worker panicked")));
        }
    });
    let mut per_strategy: Vec<(Strategy, Vec<f64>)> = Vec::new();
    let mut metric = String::new();
    let mut hashes = std::collections::BTreeSet::new();
    for &strategy in &Strategy::ALL {
        let mut finals = Vec::new();
        for (s, seed, outcome) in &runs {
            if *s != strategy {
                continue;
            }
            match outcome {
                Ok(r) => {
                    if let Some(failure) = &r.failure {
                        eprintln!("numeric failure ({} seed {seed}): {failure}", s.as_str());
                        return EXIT_NUMERIC;
                    }
                    metric = r.metric_name.to_string();
                    hashes.insert((*seed, r.dataset_hash.clone()));
                    finals.push(r.final_metric);
                }
                Err(e) => {
                    eprintln!("run failed ({} seed {seed}): {e}", s.as_str());
                    return exit_code_for(e);
                }
            }
        }
        per_strategy.push((strategy, finals));
    }
    // paired-comparison integrity: one dataset hash per seed across strategies
    debug_assert_eq!(hashes.len(), args.seeds as usize);
    let rows = compare_rows(&metric, &per_strategy);
    let mut csv = String::from("strategy,metric,mean,sd,gain_vs_baseline_pct,gain_vs_strategy_pct\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.strategy.as_str(),
            row.metric,
            row.mean,
            row.sd,
            row.gain_vs_baseline_pct,
            row.gain_vs_strategy_pct
        ));
    }
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "seeds": (config.seed..config.seed + args.seeds).collect::<Vec<u64>>(),
        "metric": metric,
        "rows": rows,
    });
    let csv_path = dir.join("compare.csv");
    if let Err(e) = write_atomic(&csv_path, csv.as_bytes()) {
        eprintln!("write failed: {e}");
        return 1;
    }
    if let Err(e) = write_atomic(
        &dir.join("compare.json"),
        &serde_json::to_vec_pretty(&doc).expect("doc serializes"),
    ) {
        eprintln!("write failed: {e}");
        return 1;
    }
    print!("{csv}");
    println!("-> {}", csv_path.display());
    EXIT_OK
}

pub fn cmd_selfcheck() -> i32 {
    let reports = run_selfcheck();
    let mut ok = true;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", r.name, r.detail);
        ok &= r.passed;
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_SELFCHECK
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Selfcheck => cmd_selfcheck(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_gain_conventions_match_hand_values() {
        // RMSE 21.20 -> 19.86: 6.32% against the baseline, 6.75% against the
        // improved value
        let gain_baseline = improvement("rmse", 21.20, 19.86) / 21.20 * 100.0;
        let gain_strategy = improvement("rmse", 21.20, 19.86) / 19.86 * 100.0;
        assert!((gain_baseline - 6.32).abs() < 0.01);
        assert!((gain_strategy - 6.75).abs() < 0.01);
    }

    #[test]
    fn identical_strategies_have_zero_gain() {
        let per = vec![
            (Strategy::GlobalFl, vec![2.0, 2.2]),
            (Strategy::StaticZoneFl, vec![2.0, 2.2]),
        ];
        let rows = compare_rows("rmse", &per);
        assert_eq!(rows[1].gain_vs_baseline_pct, 0.0);
        assert_eq!(rows[1].gain_vs_strategy_pct, 0.0);
    }

    #[test]
    fn mean_sd_matches_hand_computation() {
        let (mean, sd) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(mean, 2.0);
        assert!((sd - 1.0).abs() < 1e-12);
    }
}
