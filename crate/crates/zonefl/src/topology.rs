//! Zone identity, the adjacency graph over active zones, and the binary
//! merge-history trees that make splitting possible.
//!
//! Partitions are immutable snapshots: every merge or split produces a new
//! `ZonePartition` with a bumped version, so callers can evaluate
//! hypothetical mutations without touching live state.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZoneId(pub u64);

impl std::fmt::Display for ZoneId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "z{}", self.0)
    }
}

/// Binary tree of zone merging history. Leaves are indivisible atomic zones;
/// each internal node is the zone formed by merging its two children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeTree {
    Leaf(ZoneId),
    Node { id: ZoneId, left: Box<MergeTree>, right: Box<MergeTree> },
}

impl MergeTree {
    pub fn id(&self) -> ZoneId {
        match self {
            MergeTree::Leaf(id) => *id,
            MergeTree::Node { id, .. } => *id,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, MergeTree::Leaf(_))
    }

    /// Atomic-leaf set of this (sub)zone.
    pub fn leaves(&self) -> BTreeSet<ZoneId> {
        let mut out = BTreeSet::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut BTreeSet<ZoneId>) {
        match self {
            MergeTree::Leaf(id) => {
                out.insert(*id);
            }
            MergeTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn find(&self, id: ZoneId) -> Option<&MergeTree> {
        if self.id() == id {
            return Some(self);
        }
        match self {
            MergeTree::Leaf(_) => None,
            MergeTree::Node { left, right, .. } => left.find(id).or_else(|| right.find(id)),
        }
    }

    /// Nodes on the path from the root down to (and including) the target.
    fn path_to(&self, id: ZoneId) -> Option<Vec<&MergeTree>> {
        if self.id() == id {
            return Some(vec![self]);
        }
        if let MergeTree::Node { left, right, .. } = self {
            for child in [left.as_ref(), right.as_ref()] {
                if let Some(mut path) = child.path_to(id) {
                    path.insert(0, self);
                    return Some(path);
                }
            }
        }
        None
    }

    /// All nodes (internal and leaf) at depth 1..=level, excluding the root.
    /// The root is level 0. Shallow trees simply return fewer candidates.
    pub fn sub_zones(&self, level: u32) -> Vec<&MergeTree> {
        let mut out = Vec::new();
        if let MergeTree::Node { left, right, .. } = self {
            left.collect_to_depth(level, 1, &mut out);
            right.collect_to_depth(level, 1, &mut out);
        }
        out
    }

    fn collect_to_depth<'a>(&'a self, level: u32, depth: u32, out: &mut Vec<&'a MergeTree>) {
        if depth > level {
            return;
        }
        out.push(self);
        if let MergeTree::Node { left, right, .. } = self {
            left.collect_to_depth(level, depth + 1, out);
            right.collect_to_depth(level, depth + 1, out);
        }
    }
}

fn edge_key(a: ZoneId, b: ZoneId) -> (ZoneId, ZoneId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// The current set of active zones, their adjacency, and their merge trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePartition {
    atomic_names: BTreeMap<ZoneId, String>,
    atomic_edges: BTreeSet<(ZoneId, ZoneId)>,
    active: BTreeMap<ZoneId, MergeTree>,
    adjacency: BTreeSet<(ZoneId, ZoneId)>,
    version: u64,
    next_id: u64,
}

impl ZonePartition {
    /// Builds a fresh partition in which every atomic zone is active.
    pub fn new(atomic: Vec<(ZoneId, String)>, edges: Vec<(ZoneId, ZoneId)>) -> Result<Self> {
        if atomic.is_empty() {
            return Err(Error::Config("partition needs at least one atomic zone".into()));
        }
        let mut atomic_names = BTreeMap::new();
        for (id, name) in atomic {
            if atomic_names.insert(id, name).is_some() {
                return Err(Error::Config(format!("duplicate atomic zone id {id}")));
            }
        }
        let mut atomic_edges = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self edge on {a}")));
            }
            for z in [a, b] {
                if !atomic_names.contains_key(&z) {
                    return Err(Error::Config(format!("edge references unknown zone {z}")));
                }
            }
            atomic_edges.insert(edge_key(a, b));
        }
        let active: BTreeMap<ZoneId, MergeTree> = atomic_names
            .keys()
            .map(|&id| (id, MergeTree::Leaf(id)))
            .collect();
        let adjacency = atomic_edges.clone();
        let next_id = atomic_names.keys().map(|z| z.0).max().unwrap() + 1;
        Ok(ZonePartition { atomic_names, atomic_edges, active, adjacency, version: 0, next_id })
    }

    /// Rectangular grid of `rows x cols` atomic zones with 4-neighborhood
    /// adjacency. Ids are assigned row-major.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        let id = |r: usize, c: usize| ZoneId((r * cols + c) as u64);
        let mut zones = Vec::new();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                zones.push((id(r, c), format!("grid-{r}-{c}")));
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        ZonePartition::new(zones, edges)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn atomic_zone_ids(&self) -> Vec<ZoneId> {
        self.atomic_names.keys().copied().collect()
    }

    pub fn atomic_name(&self, id: ZoneId) -> Option<&str> {
        self.atomic_names.get(&id).map(String::as_str)
    }

    pub fn atomic_edges(&self) -> &BTreeSet<(ZoneId, ZoneId)> {
        &self.atomic_edges
    }

    /// Active zone ids in sorted order.
    pub fn active_zones(&self) -> Vec<ZoneId> {
        self.active.keys().copied().collect()
    }

    pub fn is_active(&self, id: ZoneId) -> bool {
        self.active.contains_key(&id)
    }

    pub fn tree(&self, id: ZoneId) -> Result<&MergeTree> {
        self.active.get(&id).ok_or(Error::UnknownZone(id))
    }

    pub fn leaves_of(&self, id: ZoneId) -> Result<BTreeSet<ZoneId>> {
        Ok(self.tree(id)?.leaves())
    }

    /// Active zone containing the given atomic zone.
    pub fn covering_zone(&self, atomic: ZoneId) -> Result<ZoneId> {
        self.active
            .iter()
            .find(|(_, tree)| tree.leaves().contains(&atomic))
            .map(|(&id, _)| id)
            .ok_or(Error::UnknownZone(atomic))
    }

    pub fn adjacency(&self) -> &BTreeSet<(ZoneId, ZoneId)> {
        &self.adjacency
    }

    pub fn is_adjacent(&self, a: ZoneId, b: ZoneId) -> bool {
        self.adjacency.contains(&edge_key(a, b))
    }

    /// Active zones sharing an edge with `zone_id`, sorted by id.
    pub fn neighbors(&self, zone_id: ZoneId) -> Result<Vec<ZoneId>> {
        if !self.is_active(zone_id) {
            return Err(Error::UnknownZone(zone_id));
        }
        Ok(self
            .adjacency
            .iter()
            .filter_map(|&(a, b)| {
                if a == zone_id {
                    Some(b)
                } else if b == zone_id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect())
    }

    /// Merges two adjacent active zones into a new one, rewiring adjacency
    /// incrementally. Returns the successor partition and the new zone id.
    pub fn apply_merge(&self, z_i: ZoneId, z_n: ZoneId) -> Result<(ZonePartition, ZoneId)> {
        for z in [z_i, z_n] {
            if !self.is_active(z) {
                return Err(Error::UnknownZone(z));
            }
        }
        if !self.is_adjacent(z_i, z_n) {
            return Err(Error::MergeRejected(z_i, z_n));
        }
        let mut next = self.clone();
        let merged_id = ZoneId(next.next_id);
        next.next_id += 1;
        let left = next.active.remove(&z_i).unwrap();
        let right = next.active.remove(&z_n).unwrap();
        next.active.insert(
            merged_id,
            MergeTree::Node { id: merged_id, left: Box::new(left), right: Box::new(right) },
        );
        // rewire: edges touching either constituent now touch the merged zone
        let mut adjacency = BTreeSet::new();
        for &(a, b) in &next.adjacency {
            let map = |z: ZoneId| if z == z_i || z == z_n { merged_id } else { z };
            let (a, b) = (map(a), map(b));
            if a != b {
                adjacency.insert(edge_key(a, b));
            }
        }
        next.adjacency = adjacency;
        next.version += 1;
        Ok((next, merged_id))
    }

    /// Splits `split_candidate` (a non-root node of `merged_zone`'s tree) out
    /// of the merged zone. Every ancestor of the candidate is deleted; each
    /// remaining maximal subtree becomes an active zone. Returns the new
    /// partition and the new active zone ids (candidate first).
    pub fn apply_split(
        &self,
        merged_zone: ZoneId,
        split_candidate: ZoneId,
    ) -> Result<(ZonePartition, Vec<ZoneId>)> {
        let tree = self.tree(merged_zone)?;
        if split_candidate == merged_zone {
            return Err(Error::SplitRejected { zone: merged_zone, candidate: split_candidate });
        }
        let path = tree
            .path_to(split_candidate)
            .ok_or(Error::SplitRejected { zone: merged_zone, candidate: split_candidate })?;
        // path = [root, ..., candidate]; deleting the candidate's ancestors
        // frees, at each ancestor, the child subtree not on the path.
        let mut new_trees: Vec<MergeTree> = vec![(*path.last().unwrap()).clone()];
        for pair in path.windows(2) {
            let (ancestor, on_path) = (pair[0], pair[1]);
            if let MergeTree::Node { left, right, .. } = ancestor {
                let off_path = if left.id() == on_path.id() { right } else { left };
                new_trees.push(off_path.as_ref().clone());
            }
        }
        let mut next = self.clone();
        next.active.remove(&merged_zone);
        let mut new_ids = Vec::new();
        for t in new_trees {
            new_ids.push(t.id());
            next.active.insert(t.id(), t);
        }
        next.adjacency = next.atomic_adjacency_closure();
        next.version += 1;
        Ok((next, new_ids))
    }

    /// Ground-truth adjacency: two active zones are adjacent iff some atomic
    /// zone of one borders some atomic zone of the other. Used as the oracle
    /// for the incrementally maintained edge set.
    pub fn atomic_adjacency_closure(&self) -> BTreeSet<(ZoneId, ZoneId)> {
        let mut leaf_owner: BTreeMap<ZoneId, ZoneId> = BTreeMap::new();
        for (&id, tree) in &self.active {
            for leaf in tree.leaves() {
                leaf_owner.insert(leaf, id);
            }
        }
        let mut edges = BTreeSet::new();
        for &(a, b) in &self.atomic_edges {
            let (za, zb) = (leaf_owner[&a], leaf_owner[&b]);
            if za != zb {
                edges.insert(edge_key(za, zb));
            }
        }
        edges
    }

    /// Checks that the active zones' atomic-leaf sets cover every atomic zone
    /// exactly once.
    pub fn leaf_partition_holds(&self) -> bool {
        let mut seen = BTreeSet::new();
        for tree in self.active.values() {
            for leaf in tree.leaves() {
                if !seen.insert(leaf) {
                    return false;
                }
            }
        }
        seen.len() == self.atomic_names.len()
    }

    /// Collapses the whole partition into a single active zone regardless of
    /// adjacency. This is the degenerate one-zone partition that recovers
    /// Global FL.
    pub fn collapse_all(&self) -> ZonePartition {
        let mut next = self.clone();
        let mut trees: Vec<MergeTree> = next.active.values().cloned().collect();
        while trees.len() > 1 {
            let right = trees.pop().unwrap();
            let left = trees.pop().unwrap();
            let id = ZoneId(next.next_id);
            next.next_id += 1;
            trees.push(MergeTree::Node { id, left: Box::new(left), right: Box::new(right) });
        }
        let root = trees.pop().unwrap();
        next.active = BTreeMap::from([(root.id(), root)]);
        next.adjacency = BTreeSet::new();
        next.version += 1;
        next
    }
}
