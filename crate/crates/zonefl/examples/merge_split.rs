//! Zone merge and split in action.
//!
//! Two runs of the adaptive (ZMS) strategy:
//! 1. an over-split region — every zone shares one ground truth, so merging
//!    neighbors is the right move and the merge checks fire;
//! 2. a mis-merged region — two zones with different ground truths start
//!    merged, and the split check walks the merge-history tree to undo it.
//!
//! Run with: cargo run --example merge_split

use zonefl::{run_strategy, ScenarioConfig, Strategy, ZmsEvent};

fn describe(events: &[ZmsEvent]) {
    if events.is_empty() {
        println!("  (no partition changes)");
    }
    for event in events {
        match event {
            ZmsEvent::Merge { round, zone_a, zone_b, merged, loss_a_before, loss_a_after, .. } => {
                println!(
                    "  round {round}: merged zones {zone_a} + {zone_b} -> {merged} \
                     (one constituent's loss {loss_a_before:.4} -> {loss_a_after:.4})"
                );
            }
            ZmsEvent::Split { round, zone, candidate, new_zones, .. } => {
                println!(
                    "  round {round}: split zone {zone} at sub-zone {candidate} -> {new_zones:?}"
                );
            }
        }
    }
}

fn main() -> zonefl::Result<()> {
    println!("over-split homogeneous region (heterogeneity = 0):");
    let oversplit = ScenarioConfig { seed: 3, heterogeneity: 0.0, ..Default::default() };
    let result = run_strategy(&oversplit, Strategy::Zms)?;
    describe(&result.events);
    println!(
        "  active zones: 9 -> {}, final rmse {:.4}",
        result.final_partition.active_zones().len(),
        result.final_metric
    );

    println!();
    println!("mis-merged heterogeneous region (zones 0 and 1 start merged):");
    let mismerged = ScenarioConfig { seed: 3, initial_merges: vec![(0, 1)], ..Default::default() };
    let result = run_strategy(&mismerged, Strategy::Zms)?;
    describe(&result.events);
    println!(
        "  active zones: 8 -> {}, final rmse {:.4}",
        result.final_partition.active_zones().len(),
        result.final_metric
    );
    Ok(())
}
