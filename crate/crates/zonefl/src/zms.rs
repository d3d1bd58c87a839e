//! Greedy zone merge and split, scheduled across training rounds.
//!
//! A merge joins a zone with the neighbor whose shared model improves both
//! constituents' validation loss, picking the neighbor with the largest total
//! improvement. A split walks a merged zone's merge-history tree, finds a
//! sub-zone whose independently trained model beats the merged model on that
//! sub-zone, and splits it out; the candidate's ancestors dissolve into their
//! remaining maximal subtrees.

use crate::error::{Error, Result};
use crate::model::{ClientDataset, ModelParams};
use crate::protocol::{
    collect_validation, eligible_clients, run_zone_round, MessageLedger, RoundConfig,
    ZoneModelState,
};
use crate::rng::{mix, rng_from, salt};
use crate::topology::{ZoneId, ZonePartition};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZmsConfig {
    /// Merge checks run every this many completed rounds.
    pub merge_cadence: u64,
    /// Split checks run every this many completed rounds.
    pub split_cadence: u64,
    /// Tree depth explored for split candidates (root = level 0).
    pub level: u32,
    /// Number of worst split candidates actually trained and tested.
    pub top_k: usize,
    /// Run one federated round over the union before judging a merge.
    pub joint_training_round: bool,
    /// Fraction of clients whose validation data backs merge/split decisions.
    pub validation_fraction: f64,
    /// No merge/split checks before this many rounds have completed, giving
    /// zone models time to converge.
    pub warmup_rounds: u64,
}

impl Default for ZmsConfig {
    fn default() -> Self {
        ZmsConfig {
            merge_cadence: 25,
            split_cadence: 33,
            level: 2,
            top_k: 3,
            joint_training_round: true,
            validation_fraction: 1.0,
            warmup_rounds: 50,
        }
    }
}

impl ZmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.merge_cadence == 0 || self.split_cadence == 0 {
            return Err(Error::Config("zms cadences must be >= 1".into()));
        }
        if self.level == 0 {
            return Err(Error::Config("zms level must be >= 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("zms top_k must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 1.0) {
            return Err(Error::Config("zms validation_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Decision losses recorded for one evaluated merge candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeCandidateEval {
    pub neighbor: ZoneId,
    pub loss_i_before: f64,
    pub loss_i_after: f64,
    pub loss_n_before: f64,
    pub loss_n_after: f64,
    pub admitted: bool,
}

impl MergeCandidateEval {
    pub fn gain(&self) -> f64 {
        (self.loss_i_before - self.loss_i_after) + (self.loss_n_before - self.loss_n_after)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeDecision {
    pub zone_i: ZoneId,
    pub best_neighbor: ZoneId,
    pub merged_params: ModelParams,
    pub eval: MergeCandidateEval,
    /// Every neighbor evaluated in this decision, admitted or not.
    pub candidates: Vec<MergeCandidateEval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub zone: ZoneId,
    pub candidate: ZoneId,
    pub candidate_params: ModelParams,
    /// Loss of the merged zone's model on the candidate sub-zone.
    pub loss_parent_on_candidate: f64,
    /// Loss of the candidate's independently trained model on the sub-zone.
    pub loss_candidate_model: f64,
    /// All qualifying candidates in evaluation order (worst first).
    pub candidates_considered: Vec<(ZoneId, f64)>,
}

/// Partition mutation recorded in the round report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZmsEvent {
    Merge {
        round: u64,
        zone_a: ZoneId,
        zone_b: ZoneId,
        merged: ZoneId,
        loss_a_before: f64,
        loss_a_after: f64,
        loss_b_before: f64,
        loss_b_after: f64,
        candidates: Vec<MergeCandidateEval>,
    },
    Split {
        round: u64,
        zone: ZoneId,
        candidate: ZoneId,
        new_zones: Vec<ZoneId>,
        loss_parent_on_candidate: f64,
        loss_candidate_model: f64,
        candidates: Vec<(ZoneId, f64)>,
    },
}

/// Mean validation loss of `params` over a fraction-p client subset selected
/// deterministically from `seed_parts`. The subset depends only on the seed
/// parts and the eligible clients, so evaluating two models with the same
/// parts scores them on identical data.
fn decision_loss(
    zone: ZoneId,
    params: &ModelParams,
    clients: &[ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    p: f64,
    seed_parts: &[u64],
    ledger: &mut MessageLedger,
) -> Result<Option<f64>> {
    let refs: Vec<&ClientDataset> = clients.iter().collect();
    let mut rng = rng_from(seed_parts);
    let reports = collect_validation(zone, params, &refs, leaves, p, &mut rng)?;
    if reports.is_empty() {
        return Ok(None);
    }
    ledger.record_validations_received(zone, reports.len() as u64);
    Ok(Some(reports.iter().map(|r| r.loss).sum::<f64>() / reports.len() as f64))
}

/// Trains a hypothetical model for one federated round over the given leaf
/// set, starting from `params`. Message accounting for hypothetical rounds is
/// deliberately kept out of the ledger.
fn hypothetical_round(
    zone: ZoneId,
    params: &ModelParams,
    clients: &[ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    round_cfg: &RoundConfig,
    round_seed: u64,
) -> Result<ModelParams> {
    let state = ZoneModelState::new(zone, params.clone());
    let zone_clients = eligible_clients(clients, leaves);
    let mut scratch = MessageLedger::new();
    let (next, _) =
        run_zone_round(&state, &zone_clients, leaves, round_cfg, &mut scratch, 0, round_seed)?;
    Ok(next.params)
}

/// Evaluates every neighbor of `zone_i` as a merge partner and returns the
/// best admissible one, if any. A neighbor is admissible only when the merged
/// model strictly improves the validation loss of BOTH constituents; among
/// admissible neighbors the one with the largest total improvement wins, ties
/// broken by lowest zone id.
#[allow(clippy::too_many_arguments)]
pub fn propose_merge(
    partition: &ZonePartition,
    zone_i: ZoneId,
    states: &BTreeMap<ZoneId, ZoneModelState>,
    clients: &[ClientDataset],
    round_cfg: &RoundConfig,
    zms_cfg: &ZmsConfig,
    round: u64,
    scenario_seed: u64,
    ledger: &mut MessageLedger,
) -> Result<Option<MergeDecision>> {
    let leaves_i = partition.leaves_of(zone_i)?;
    let theta_i = &states[&zone_i].params;
    let p = zms_cfg.validation_fraction;
    let parts_i = [scenario_seed, salt::ZMS_VAL, round, zone_i.0];
    let Some(loss_i_before) =
        decision_loss(zone_i, theta_i, clients, &leaves_i, p, &parts_i, ledger)?
    else {
        return Ok(None);
    };
    let mut candidates = Vec::new();
    let mut best: Option<(MergeCandidateEval, ModelParams)> = None;
    for neighbor in partition.neighbors(zone_i)? {
        let leaves_n = partition.leaves_of(neighbor)?;
        let theta_n = &states[&neighbor].params;
        let parts_n = [scenario_seed, salt::ZMS_VAL, round, neighbor.0];
        let Some(loss_n_before) =
            decision_loss(neighbor, theta_n, clients, &leaves_n, p, &parts_n, ledger)?
        else {
            continue;
        };
        let averaged = ModelParams::average(theta_i, theta_n)?;
        let merged_params = if zms_cfg.joint_training_round {
            let union: BTreeSet<ZoneId> = leaves_i.union(&leaves_n).copied().collect();
            let joint_seed = mix(&[scenario_seed, salt::ZMS_JOINT, round, zone_i.0, neighbor.0]);
            hypothetical_round(zone_i, &averaged, clients, &union, round_cfg, joint_seed)?
        } else {
            averaged
        };
        let Some(loss_i_after) =
            decision_loss(zone_i, &merged_params, clients, &leaves_i, p, &parts_i, ledger)?
        else {
            continue;
        };
        let Some(loss_n_after) =
            decision_loss(neighbor, &merged_params, clients, &leaves_n, p, &parts_n, ledger)?
        else {
            continue;
        };
        let admitted = loss_i_after < loss_i_before && loss_n_after < loss_n_before;
        let eval = MergeCandidateEval {
            neighbor,
            loss_i_before,
            loss_i_after,
            loss_n_before,
            loss_n_after,
            admitted,
        };
        if admitted {
            let better = match &best {
                None => true,
                Some((current, _)) => eval.gain() > current.gain(),
            };
            if better {
                best = Some((eval.clone(), merged_params));
            }
        }
        candidates.push(eval);
    }
    Ok(best.map(|(eval, merged_params)| MergeDecision {
        zone_i,
        best_neighbor: eval.neighbor,
        merged_params,
        eval,
        candidates,
    }))
}

/// Evaluates split candidates of a merged zone per the greedy split
/// algorithm: sub-zones down to the configured level that perform worse than
/// the whole zone, worst first, of which the top-k are trained independently
/// for one round; the first whose trained model strictly beats the merged
/// model on the sub-zone wins. At most one split per round.
#[allow(clippy::too_many_arguments)]
pub fn propose_split(
    partition: &ZonePartition,
    merged_zone: ZoneId,
    states: &BTreeMap<ZoneId, ZoneModelState>,
    clients: &[ClientDataset],
    round_cfg: &RoundConfig,
    zms_cfg: &ZmsConfig,
    round: u64,
    scenario_seed: u64,
    ledger: &mut MessageLedger,
) -> Result<Option<SplitDecision>> {
    let tree = partition.tree(merged_zone)?;
    if tree.is_leaf() {
        return Ok(None);
    }
    let theta_j = &states[&merged_zone].params;
    let p = zms_cfg.validation_fraction;
    let zone_leaves = tree.leaves();
    let parts_zone = [scenario_seed, salt::ZMS_VAL, round, merged_zone.0];
    let Some(loss_zone) =
        decision_loss(merged_zone, theta_j, clients, &zone_leaves, p, &parts_zone, ledger)?
    else {
        return Ok(None);
    };
    // getCandidates: sub-zones doing worse than the whole zone, worst first
    let mut candidates: Vec<(ZoneId, BTreeSet<ZoneId>, f64)> = Vec::new();
    for sub in tree.sub_zones(zms_cfg.level) {
        let sub_leaves = sub.leaves();
        let parts_sub = [scenario_seed, salt::ZMS_VAL, round, merged_zone.0, sub.id().0];
        let Some(loss_sub) =
            decision_loss(sub.id(), theta_j, clients, &sub_leaves, p, &parts_sub, ledger)?
        else {
            continue;
        };
        if loss_sub > loss_zone {
            candidates.push((sub.id(), sub_leaves, loss_sub));
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    let considered: Vec<(ZoneId, f64)> =
        candidates.iter().map(|(id, _, loss)| (*id, *loss)).collect();
    for (cand_id, cand_leaves, loss_parent_on_candidate) in
        candidates.into_iter().take(zms_cfg.top_k)
    {
        let train_seed = mix(&[scenario_seed, salt::ZMS_CAND_TRAIN, round, cand_id.0]);
        let candidate_params =
            hypothetical_round(cand_id, theta_j, clients, &cand_leaves, round_cfg, train_seed)?;
        let parts_sub = [scenario_seed, salt::ZMS_VAL, round, merged_zone.0, cand_id.0];
        let Some(loss_candidate_model) = decision_loss(
            cand_id,
            &candidate_params,
            clients,
            &cand_leaves,
            p,
            &parts_sub,
            ledger,
        )?
        else {
            continue;
        };
        if loss_candidate_model < loss_parent_on_candidate {
            return Ok(Some(SplitDecision {
                zone: merged_zone,
                candidate: cand_id,
                candidate_params,
                loss_parent_on_candidate,
                loss_candidate_model,
                candidates_considered: considered,
            }));
        }
    }
    Ok(None)
}

/// Runs the scheduled merge and split checks after a completed training
/// round, applying at most one merge and one split. `round` is the index of
/// the round that just completed (0-based).
#[allow(clippy::too_many_arguments)]
pub fn zms_step(
    partition: &mut ZonePartition,
    states: &mut BTreeMap<ZoneId, ZoneModelState>,
    clients: &[ClientDataset],
    round_cfg: &RoundConfig,
    zms_cfg: &ZmsConfig,
    round: u64,
    scenario_seed: u64,
    ledger: &mut MessageLedger,
) -> Result<Vec<ZmsEvent>> {
    let completed = round + 1;
    if completed < zms_cfg.warmup_rounds {
        return Ok(Vec::new());
    }
    let mut events = Vec::new();
    let mut merged_this_round: Option<ZoneId> = None;
    if completed % zms_cfg.merge_cadence == 0 {
        let actives = partition.active_zones();
        let mut rng = rng_from(&[scenario_seed, salt::ZMS_PICK_MERGE, round]);
        let zone_i = actives[rng.gen_range(0..actives.len())];
        if let Some(decision) = propose_merge(
            partition, zone_i, states, clients, round_cfg, zms_cfg, round, scenario_seed, ledger,
        )? {
            let (next, merged_id) = partition.apply_merge(zone_i, decision.best_neighbor)?;
            let round_i = states[&zone_i].round;
            let round_n = states[&decision.best_neighbor].round;
            states.remove(&zone_i);
            states.remove(&decision.best_neighbor);
            let mut merged_state = ZoneModelState::new(merged_id, decision.merged_params.clone());
            merged_state.round = round_i.max(round_n);
            states.insert(merged_id, merged_state);
            *partition = next;
            merged_this_round = Some(merged_id);
            events.push(ZmsEvent::Merge {
                round,
                zone_a: zone_i,
                zone_b: decision.best_neighbor,
                merged: merged_id,
                loss_a_before: decision.eval.loss_i_before,
                loss_a_after: decision.eval.loss_i_after,
                loss_b_before: decision.eval.loss_n_before,
                loss_b_after: decision.eval.loss_n_after,
                candidates: decision.candidates,
            });
        }
    }
    if completed % zms_cfg.split_cadence == 0 {
        // a zone merged in this same step is not reconsidered for splitting
        let merged_zones: Vec<ZoneId> = partition
            .active_zones()
            .into_iter()
            .filter(|&z| {
                Some(z) != merged_this_round && !partition.tree(z).map(|t| t.is_leaf()).unwrap_or(true)
            })
            .collect();
        if !merged_zones.is_empty() {
            let mut rng = rng_from(&[scenario_seed, salt::ZMS_PICK_SPLIT, round]);
            let zone_j = merged_zones[rng.gen_range(0..merged_zones.len())];
            if let Some(decision) = propose_split(
                partition, zone_j, states, clients, round_cfg, zms_cfg, round, scenario_seed,
                ledger,
            )? {
                let (next, new_zones) = partition.apply_split(zone_j, decision.candidate)?;
                let parent = states.remove(&zone_j).expect("split zone had a state");
                for &z in &new_zones {
                    let params = if z == decision.candidate {
                        decision.candidate_params.clone()
                    } else {
                        parent.params.clone()
                    };
                    let mut s = ZoneModelState::new(z, params);
                    s.round = parent.round;
                    states.insert(z, s);
                }
                *partition = next;
                events.push(ZmsEvent::Split {
                    round,
                    zone: zone_j,
                    candidate: decision.candidate,
                    new_zones,
                    loss_parent_on_candidate: decision.loss_parent_on_candidate,
                    loss_candidate_model: decision.loss_candidate_model,
                    candidates: decision.candidates_considered,
                });
            }
        }
    }
    Ok(events)
}
