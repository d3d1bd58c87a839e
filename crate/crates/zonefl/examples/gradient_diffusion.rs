//! Zone gradient diffusion: fixed zones, attention-weighted neighbor help.
//!
//! Each zone's update combines its own aggregated gradient with gradients
//! its neighbors' clients computed against this zone's parameters, weighted
//! by a softmax over sigmoid(inner product) similarities. Zones with aligned
//! data end up listening to each other; misaligned neighbors get discounted.
//!
//! Run with: cargo run --example gradient_diffusion

use std::collections::BTreeMap;
use zonefl::{run_strategy, ScenarioConfig, Strategy, ZgdConfig, ZoneId};

fn main() -> zonefl::Result<()> {
    let config = ScenarioConfig {
        seed: 1,
        zgd: ZgdConfig { dump_attention: true, ..Default::default() },
        ..Default::default()
    };
    let baseline = run_strategy(&config, Strategy::StaticZoneFl)?;
    let diffused = run_strategy(&config, Strategy::Zgd)?;
    println!(
        "static zone rmse {:.4}, with diffusion {:.4}",
        baseline.final_metric, diffused.final_metric
    );

    // average attention each zone paid to each neighbor over the last 50 rounds
    let last_rounds = config.rounds - 50;
    let mut sums: BTreeMap<(ZoneId, ZoneId), (f64, u32)> = BTreeMap::new();
    for row in diffused.attention.iter().filter(|r| r.round >= last_rounds) {
        let entry = sums.entry((row.zone_id, row.neighbor_id)).or_insert((0.0, 0));
        entry.0 += row.beta;
        entry.1 += 1;
    }
    println!();
    println!("mean attention over the last 50 rounds (zone <- neighbor):");
    for ((zone, neighbor), (sum, n)) in &sums {
        println!("  {zone} <- {neighbor}: {:.3}", sum / f64::from(*n));
    }
    Ok(())
}
