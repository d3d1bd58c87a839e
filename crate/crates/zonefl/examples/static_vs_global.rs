//! Per-zone models versus one global model on a planted heterogeneous
//! scenario.
//!
//! Nine zones on a 3x3 grid each get their own ground-truth linear model;
//! sixty mobile clients hold data in one to five zones. Training the zones
//! separately should beat a single global model exactly because the planted
//! truths differ per zone.
//!
//! Run with: cargo run --example static_vs_global

use zonefl::{run_strategy, ScenarioConfig, Strategy};

fn main() -> zonefl::Result<()> {
    let seeds = 1..=5;
    let mut global_finals = Vec::new();
    let mut zone_finals = Vec::new();
    for seed in seeds {
        let config = ScenarioConfig { seed, ..Default::default() };
        let global = run_strategy(&config, Strategy::GlobalFl)?;
        let zones = run_strategy(&config, Strategy::StaticZoneFl)?;
        println!(
            "seed {seed}: global rmse {:.4}, static zone rmse {:.4}",
            global.final_metric, zones.final_metric
        );
        global_finals.push(global.final_metric);
        zone_finals.push(zones.final_metric);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let g = mean(&global_finals);
    let z = mean(&zone_finals);
    println!();
    println!("mean over seeds: global {g:.4}, static zone {z:.4}");
    println!("zone advantage:  {:.2}% lower RMSE", (g - z) / g * 100.0);
    Ok(())
}
