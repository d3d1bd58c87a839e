//! Zone Gradient Diffusion: zones stay fixed, and each zone's round update
//! adds attention-weighted gradients that neighbor zones' clients compute
//! against this zone's parameters.
//!
//! All gradients in a round are taken against the round-start parameter
//! snapshot, so the per-zone computations are order-independent.

use crate::error::{Error, Result};
use crate::model::{sigmoid, ClientDataset, Gradient, ModelParams};
use crate::protocol::{
    apply_update, client_mean, collect_zone_gradients, eligible_clients, fedavg, zone_loss,
    zone_loss_pooled, DataSplit, MessageLedger, RoundConfig, ZoneModelState, ZoneRoundReport,
};
use crate::rng::{mix, salt};
use crate::topology::{ZoneId, ZonePartition};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How a zone's own aggregated gradient is formed in a diffusion round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnGradientMode {
    /// Unweighted mean over clients, consistent with the neighbor formula.
    ClientMean,
    /// Sample-count-weighted FedAvg, matching the plain round protocol.
    #[serde(rename = "fedavg")]
    FedAvg,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_own_mode() -> OwnGradientMode {
    OwnGradientMode::ClientMean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZgdConfig {
    /// Global scale on both gradient terms of the update (1.0 = the plain
    /// diffusion update).
    pub lambda: f64,
    pub own_gradient_mode: OwnGradientMode,
    /// Extension knob, off by default: score neighbor similarity with the
    /// cosine instead of the raw inner product.
    pub cosine_similarity: bool,
    /// Dump the per-round attention coefficients into the results.
    pub dump_attention: bool,
}

impl Default for ZgdConfig {
    fn default() -> Self {
        ZgdConfig {
            lambda: default_lambda(),
            own_gradient_mode: default_own_mode(),
            cosine_similarity: false,
            dump_attention: false,
        }
    }
}

impl ZgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("zgd lambda must be positive".into()));
        }
        Ok(())
    }
}

/// The inputs to one zone's diffusion update, all taken against the same
/// round-start parameters (witnessed by the fingerprint).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionRoundInput {
    pub zone_id: ZoneId,
    pub params_fingerprint: u64,
    pub own_gradient: Gradient,
    pub neighbor_gradients: Vec<(ZoneId, Gradient)>,
}

/// Softmax-normalized sigmoid scores of own-vs-neighbor gradient inner
/// products. One coefficient per neighbor, positive, summing to 1.
pub fn attention_coefficients(
    own_grad: &Gradient,
    neighbor_grads: &[Gradient],
    cosine: bool,
) -> Result<Vec<f64>> {
    if neighbor_grads.is_empty() {
        return Err(Error::InvalidArgument(
            "attention_coefficients needs at least one neighbor gradient".into(),
        ));
    }
    let scores: Vec<f64> = neighbor_grads
        .iter()
        .map(|g| {
            let raw = own_grad.dot(g);
            let val = if cosine {
                let denom = own_grad.norm() * g.norm();
                if denom > 0.0 {
                    raw / denom
                } else {
                    0.0
                }
            } else {
                raw
            };
            sigmoid(val)
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Unweighted mean over a neighbor zone's sampled clients of each client's
/// local-training delta starting from `theta_i`. `Ok(None)` when the neighbor
/// contributes no gradients this round.
pub fn neighbor_gradient(
    theta_i: &ModelParams,
    neighbor_clients: &[&ClientDataset],
    neighbor_leaves: &std::collections::BTreeSet<ZoneId>,
    config: &RoundConfig,
    round_seed: u64,
) -> Result<Option<(Gradient, usize)>> {
    let (participants, gradients) =
        collect_zone_gradients(theta_i, neighbor_clients, neighbor_leaves, config, round_seed)?;
    if gradients.is_empty() {
        return Ok(None);
    }
    Ok(Some((client_mean(&gradients)?, participants.len())))
}

/// θ_{t+1} = θ_t + λ·(own + Σ β_n·neighbor_n); the round advances. A
/// non-finite result aborts the zone's round and keeps the previous state.
pub fn zgd_update(
    state: &ZoneModelState,
    input: &DiffusionRoundInput,
    betas: &[f64],
    lambda: f64,
) -> Result<ZoneModelState> {
    if betas.len() != input.neighbor_gradients.len() {
        return Err(Error::ShapeMismatch);
    }
    let mut combined = input.own_gradient.clone();
    for (beta, (_, g)) in betas.iter().zip(&input.neighbor_gradients) {
        combined.add_scaled(g, *beta);
    }
    apply_update(state, &combined, lambda)
}

/// One attention coefficient as recorded in the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub round: u64,
    pub zone_id: ZoneId,
    pub neighbor_id: ZoneId,
    pub beta: f64,
}

/// Runs one synchronous diffusion round over every active zone. All zones
/// read the round-start snapshot of parameters; the ledger additionally
/// counts the cross-zone gradient messages.
pub fn zgd_round(
    partition: &ZonePartition,
    states: &BTreeMap<ZoneId, ZoneModelState>,
    clients: &[ClientDataset],
    round_cfg: &RoundConfig,
    zgd_cfg: &ZgdConfig,
    ledger: &mut MessageLedger,
    round: u64,
    scenario_seed: u64,
) -> Result<(BTreeMap<ZoneId, ZoneModelState>, Vec<ZoneRoundReport>, Vec<AttentionRow>)> {
    let mut next_states = BTreeMap::new();
    let mut reports = Vec::new();
    let mut attention = Vec::new();
    for zone_id in partition.active_zones() {
        let state = &states[&zone_id];
        let snapshot_fingerprint = state.params.fingerprint();
        let leaves = partition.leaves_of(zone_id)?;
        let zone_clients = eligible_clients(clients, &leaves);
        let round_seed = mix(&[scenario_seed, salt::ROUND, round, zone_id.0]);
        let (participants, own_grads) =
            collect_zone_gradients(&state.params, &zone_clients, &leaves, round_cfg, round_seed)?;
        ledger.record_models_sent(zone_id, participants.len() as u64);
        ledger.record_gradients_received(zone_id, own_grads.len() as u64);
        if own_grads.is_empty() {
            reports.push(ZoneRoundReport {
                zone_id,
                round,
                participants,
                pre_train_loss: zone_loss(&state.params, &zone_clients, &leaves, DataSplit::Train)
                    .ok(),
                post_train_loss: None,
                validation_loss: None,
                validation_loss_pooled: None,
                messages: 0,
                skipped: true,
            });
            next_states.insert(zone_id, state.clone());
            continue;
        }
        let own = match zgd_cfg.own_gradient_mode {
            OwnGradientMode::ClientMean => client_mean(&own_grads)?,
            OwnGradientMode::FedAvg => fedavg(&own_grads)?,
        };
        let mut neighbor_gradients = Vec::new();
        let mut extra_messages = 0u64;
        for n in partition.neighbors(zone_id)? {
            let n_leaves = partition.leaves_of(n)?;
            let n_clients = eligible_clients(clients, &n_leaves);
            let n_seed = mix(&[scenario_seed, salt::ZGD_NEIGHBOR, round, zone_id.0, n.0]);
            if let Some((g, participant_count)) =
                neighbor_gradient(&state.params, &n_clients, &n_leaves, round_cfg, n_seed)?
            {
                ledger.record_gradients_received(zone_id, participant_count as u64);
                extra_messages += participant_count as u64;
                neighbor_gradients.push((n, g));
            }
        }
        let input = DiffusionRoundInput {
            zone_id,
            params_fingerprint: snapshot_fingerprint,
            own_gradient: own,
            neighbor_gradients,
        };
        debug_assert_eq!(input.params_fingerprint, state.params.fingerprint());
        let betas = if input.neighbor_gradients.is_empty() {
            Vec::new()
        } else {
            let grads: Vec<Gradient> =
                input.neighbor_gradients.iter().map(|(_, g)| g.clone()).collect();
            attention_coefficients(&input.own_gradient, &grads, zgd_cfg.cosine_similarity)?
        };
        if zgd_cfg.dump_attention {
            for (beta, (n, _)) in betas.iter().zip(&input.neighbor_gradients) {
                attention.push(AttentionRow { round, zone_id, neighbor_id: *n, beta: *beta });
            }
        }
        let next = match zgd_update(state, &input, &betas, zgd_cfg.lambda) {
            Ok(next) => next,
            Err(Error::NumericFailure { .. }) => {
                // round aborted for this zone; previous params retained
                reports.push(ZoneRoundReport {
                    zone_id,
                    round,
                    participants,
                    pre_train_loss: None,
                    post_train_loss: None,
                    validation_loss: None,
                    validation_loss_pooled: None,
                    messages: 0,
                    skipped: true,
                });
                next_states.insert(zone_id, state.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut next = next;
        let pre_train_loss = zone_loss(&state.params, &zone_clients, &leaves, DataSplit::Train).ok();
        let post_train_loss = zone_loss(&next.params, &zone_clients, &leaves, DataSplit::Train).ok();
        let validation_loss =
            zone_loss(&next.params, &zone_clients, &leaves, DataSplit::Validation).ok();
        let validation_loss_pooled =
            zone_loss_pooled(&next.params, &zone_clients, &leaves, DataSplit::Validation).ok();
        if let Some(v) = validation_loss.or(post_train_loss) {
            next.history.push(v);
        }
        let messages = (participants.len() + own_grads.len()) as u64 + extra_messages;
        reports.push(ZoneRoundReport {
            zone_id,
            round,
            participants,
            pre_train_loss,
            post_train_loss,
            validation_loss,
            validation_loss_pooled,
            messages,
            skipped: false,
        });
        next_states.insert(zone_id, next);
    }
    Ok((next_states, reports, attention))
}
