//! Server-load scaling: what each zone server handles compared with one
//! global server.
//!
//! With one aggregation server per zone, a zone server only receives
//! messages from clients that have data in its zone. The load fraction
//! (mean per-zone messages per round over the single-server count) depends
//! only on how many zones each client spans.
//!
//! Run with: cargo run --example server_load

use zonefl::sim::training_overhead;
use zonefl::{run_strategy, MobilityConfig, ScenarioConfig, Strategy};

fn main() -> zonefl::Result<()> {
    let mut config = ScenarioConfig { seed: 1, rounds: 20, ..Default::default() };

    println!("server load per zone server, as a fraction of the Global FL load:");
    let result = run_strategy(&config, Strategy::StaticZoneFl)?;
    println!(
        "  default mobility mix (1-5 zones per client): {:.4}",
        result.server_load_fraction
    );
    assert_eq!(result.server_load_fraction, result.server_load_fraction_ledger);

    config.mobility = MobilityConfig { zone_count_probs: vec![1.0], zone_weights: Vec::new() };
    let single = run_strategy(&config, Strategy::StaticZoneFl)?;
    println!("  every client in exactly one zone:           {:.4}", single.server_load_fraction);

    let global = run_strategy(&config, Strategy::GlobalFl)?;
    println!("  single global server (baseline):            {:.4}", global.server_load_fraction);

    println!();
    println!("per-client training overhead vs Global FL (unit cost per extra zone):");
    for k in 1..=5 {
        println!("  client in {k} zone(s): {:.1}", training_overhead(k, 1.0));
    }
    Ok(())
}
