//! Property tests: random merge/split sequences keep the partition
//! invariants, on grids and random connected layouts of up to 12 zones.

use proptest::prelude::*;
use zonefl::topology::{ZoneId, ZonePartition};

#[derive(Debug, Clone)]
enum Op {
    /// Merge the i-th adjacent pair (modulo however many exist).
    Merge(usize),
    /// Split the i-th merged zone at its j-th sub-zone candidate.
    Split(usize, usize),
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..64).prop_map(Op::Merge),
        ((0usize..64), (0usize..64)).prop_map(|(i, j)| Op::Split(i, j)),
    ]
}

fn layout_strategy() -> impl Strategy<Value = ZonePartition> {
    // grids up to 3x4 and chains up to 12 zones
    prop_oneof![
        ((1usize..=3), (1usize..=4)).prop_map(|(r, c)| ZonePartition::grid(r, c).unwrap()),
        (2u64..=12).prop_map(|n| {
            ZonePartition::new(
                (0..n).map(|i| (ZoneId(i), format!("Z{i}"))).collect(),
                (0..n - 1).map(|i| (ZoneId(i), ZoneId(i + 1))).collect(),
            )
            .unwrap()
        }),
    ]
}

fn apply(partition: ZonePartition, op: &Op) -> ZonePartition {
    match *op {
        Op::Merge(i) => {
            let pairs: Vec<(ZoneId, ZoneId)> = partition.adjacency().iter().copied().collect();
            if pairs.is_empty() {
                return partition;
            }
            let (a, b) = pairs[i % pairs.len()];
            partition.apply_merge(a, b).unwrap().0
        }
        Op::Split(i, j) => {
            let merged: Vec<ZoneId> = partition
                .active_zones()
                .into_iter()
                .filter(|&z| !partition.tree(z).unwrap().is_leaf())
                .collect();
            if merged.is_empty() {
                return partition;
            }
            let zone = merged[i % merged.len()];
            let subs = partition.tree(zone).unwrap().sub_zones(4);
            let candidate = subs[j % subs.len()].id();
            partition.apply_split(zone, candidate).unwrap().0
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_sequences_preserve_invariants(
        initial in layout_strategy(),
        ops in proptest::collection::vec(op_strategy(), 0..50),
    ) {
        let atomic: std::collections::BTreeSet<ZoneId> =
            initial.atomic_zone_ids().into_iter().collect();
        let mut partition = initial;
        let mut last_version = partition.version();
        for op in &ops {
            let before_active = partition.active_zones().len();
            let next = apply(partition.clone(), op);
            // leaf sets of active zones exactly partition the atomic zones
            prop_assert!(next.leaf_partition_holds());
            let mut leaves = std::collections::BTreeSet::new();
            for z in next.active_zones() {
                for l in next.leaves_of(z).unwrap() {
                    prop_assert!(leaves.insert(l), "leaf {l:?} covered twice");
                }
            }
            prop_assert_eq!(&leaves, &atomic);
            // incremental adjacency equals the recomputed closure
            prop_assert_eq!(next.adjacency(), &next.atomic_adjacency_closure());
            // adjacency stays symmetric-free (canonical low-high pairs), no self loops
            for &(a, b) in next.adjacency() {
                prop_assert!(a < b);
                prop_assert!(next.is_active(a) && next.is_active(b));
            }
            // versions only move forward when something changed
            let changed = next.active_zones().len() != before_active;
            if changed {
                prop_assert!(next.version() > last_version);
            }
            last_version = next.version();
            partition = next;
        }
        // every active zone is findable through covering_zone
        for atom in &atomic {
            let covering = partition.covering_zone(*atom).unwrap();
            prop_assert!(partition.leaves_of(covering).unwrap().contains(atom));
        }
    }

    #[test]
    fn merge_then_split_at_the_merged_child_restores_the_leaf_sets(
        initial in layout_strategy(),
        pick in 0usize..64,
    ) {
        let pairs: Vec<(ZoneId, ZoneId)> = initial.adjacency().iter().copied().collect();
        prop_assume!(!pairs.is_empty());
        let (a, b) = pairs[pick % pairs.len()];
        let before: Vec<_> = initial
            .active_zones()
            .iter()
            .map(|&z| initial.leaves_of(z).unwrap())
            .collect();
        let (merged, id) = initial.apply_merge(a, b).unwrap();
        let left = merged.tree(id).unwrap().sub_zones(1)[0].id();
        let (restored, _) = merged.apply_split(id, left).unwrap();
        let mut after: Vec<_> = restored
            .active_zones()
            .iter()
            .map(|&z| restored.leaves_of(z).unwrap())
            .collect();
        after.sort();
        let mut before = before;
        before.sort();
        prop_assert_eq!(before, after);
    }
}
