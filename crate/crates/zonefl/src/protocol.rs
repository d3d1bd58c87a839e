//! The per-zone federated round: client sampling, local training, FedAvg
//! aggregation, model update, and zone-level loss accounting.

use crate::error::{Error, Result};
use crate::model::{
    dataset_loss, local_train, ClientDataset, ClientId, Gradient, ModelParams,
};
use crate::rng::{rng_from, salt};
use crate::topology::ZoneId;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// A zone's model together with its round counter and loss history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneModelState {
    pub zone_id: ZoneId,
    pub params: ModelParams,
    pub round: u64,
    pub history: Vec<f64>,
}

impl ZoneModelState {
    pub fn new(zone_id: ZoneId, params: ModelParams) -> Self {
        ZoneModelState { zone_id, params, round: 0, history: Vec::new() }
    }
}

fn default_fraction() -> f64 {
    1.0
}
fn default_server_lr() -> f64 {
    1.0
}
fn default_epochs() -> u32 {
    1
}
fn default_local_lr() -> f64 {
    0.0075
}

/// Knobs for a single federated training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    /// Fraction of eligible clients sampled per round, in (0, 1].
    pub client_sample_fraction: f64,
    /// Server learning rate applied to the aggregated delta.
    pub server_learning_rate: f64,
    pub local_epochs: u32,
    pub local_learning_rate: f64,
    /// Fraction of clients used for validation reporting, in (0, 1].
    pub validation_fraction: f64,
    /// Mini-batch size for local training; `None` (or 0 in config files)
    /// means full batch.
    pub batch_size: Option<usize>,
    /// When true, FedAvg ignores sample counts and takes the arithmetic mean.
    pub equal_weight_fedavg: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            client_sample_fraction: default_fraction(),
            server_learning_rate: default_server_lr(),
            local_epochs: default_epochs(),
            local_learning_rate: default_local_lr(),
            validation_fraction: default_fraction(),
            batch_size: None,
            equal_weight_fedavg: false,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.client_sample_fraction) {
            return Err(Error::Config("client_sample_fraction must be in (0, 1]".into()));
        }
        if !in_unit(self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in (0, 1]".into()));
        }
        if !(self.server_learning_rate > 0.0) {
            return Err(Error::Config("server_learning_rate must be positive".into()));
        }
        if !(self.local_learning_rate > 0.0) {
            return Err(Error::Config("local_learning_rate must be positive".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// One client's validation result for a zone model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub client_id: ClientId,
    pub zone_id: ZoneId,
    pub params_fingerprint: u64,
    pub loss: f64,
    pub sample_count: u64,
}

/// Monotone per-zone-server message counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneCounters {
    pub models_sent: u64,
    pub gradients_received: u64,
    pub validations_received: u64,
}

impl ZoneCounters {
    pub fn training_messages(&self) -> u64 {
        self.models_sent + self.gradients_received
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageLedger {
    per_zone: BTreeMap<ZoneId, ZoneCounters>,
}

impl MessageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(&mut self, zone: ZoneId) -> &mut ZoneCounters {
        self.per_zone.entry(zone).or_default()
    }

    pub fn record_models_sent(&mut self, zone: ZoneId, n: u64) {
        self.entry(zone).models_sent += n;
    }

    pub fn record_gradients_received(&mut self, zone: ZoneId, n: u64) {
        self.entry(zone).gradients_received += n;
    }

    pub fn record_validations_received(&mut self, zone: ZoneId, n: u64) {
        self.entry(zone).validations_received += n;
    }

    pub fn zone(&self, zone: ZoneId) -> ZoneCounters {
        self.per_zone.get(&zone).copied().unwrap_or_default()
    }

    pub fn per_zone(&self) -> &BTreeMap<ZoneId, ZoneCounters> {
        &self.per_zone
    }

    pub fn total_training_messages(&self) -> u64 {
        self.per_zone.values().map(|c| c.training_messages()).sum()
    }

    pub fn total_validations(&self) -> u64 {
        self.per_zone.values().map(|c| c.validations_received).sum()
    }
}

/// Which split of a client dataset an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSplit {
    Train,
    Validation,
}

/// Uniform sample of ⌈fraction·n⌉ clients without replacement, returned in
/// ascending id order.
pub fn sample_clients(
    clients: &[ClientId],
    fraction: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ClientId>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument("sample fraction must be in (0, 1]".into()));
    }
    if clients.is_empty() {
        return Ok(Vec::new());
    }
    let n = clients.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut chosen: Vec<ClientId> = index_sample(rng, n, k).iter().map(|i| clients[i]).collect();
    chosen.sort();
    Ok(chosen)
}

/// Sample-count-weighted mean of parameter deltas (standard FedAvg). The
/// result carries the total sample count.
pub fn fedavg(gradients: &[Gradient]) -> Result<Gradient> {
    weighted_mean(gradients, false)
}

/// Unweighted mean of parameter deltas (one vote per client).
pub fn client_mean(gradients: &[Gradient]) -> Result<Gradient> {
    weighted_mean(gradients, true)
}

fn weighted_mean(gradients: &[Gradient], equal_weights: bool) -> Result<Gradient> {
    let first = gradients.first().ok_or(Error::EmptyAggregation)?;
    let dim = first.dim();
    if gradients.iter().any(|g| g.dim() != dim) {
        return Err(Error::ShapeMismatch);
    }
    let total_weight: f64 = if equal_weights {
        gradients.len() as f64
    } else {
        gradients.iter().map(|g| g.sample_count as f64).sum()
    };
    if !(total_weight > 0.0) {
        return Err(Error::InvalidArgument(
            "aggregation requires a positive total sample count".into(),
        ));
    }
    let mut acc = Gradient::zeros(dim);
    for g in gradients {
        let w = if equal_weights { 1.0 } else { g.sample_count as f64 };
        acc.add_scaled(g, w / total_weight);
    }
    acc.sample_count = gradients.iter().map(|g| g.sample_count).sum();
    Ok(acc)
}

/// θ_{t+1} = θ_t + λ·delta; the round counter advances. A non-finite result
/// aborts the round and leaves the caller's state unchanged.
pub fn apply_update(state: &ZoneModelState, agg: &Gradient, lambda: f64) -> Result<ZoneModelState> {
    if agg.dim() != state.params.dim() {
        return Err(Error::ShapeMismatch);
    }
    let mut next = state.clone();
    for (w, d) in next.params.weights.iter_mut().zip(&agg.weights) {
        *w += lambda * d;
    }
    next.params.bias += lambda * agg.bias;
    if !next.params.is_finite() {
        return Err(Error::NumericFailure { context: format!("apply_update zone {}", state.zone_id) });
    }
    next.round += 1;
    Ok(next)
}

/// Unweighted mean over clients of each client's mean per-sample loss —
/// the client-level mean of means, never sample-pooled.
pub fn zone_loss(
    params: &ModelParams,
    clients: &[&ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    which: DataSplit,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for c in clients {
        let samples = match which {
            DataSplit::Train => c.train_in(leaves),
            DataSplit::Validation => c.validation_in(leaves),
        };
        if samples.is_empty() {
            continue;
        }
        total += dataset_loss(params, &samples)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDataset { context: "zone_loss: no clients with data in zone" });
    }
    Ok(total / count as f64)
}

/// Sample-pooled variant, reported for diagnostics only.
pub fn zone_loss_pooled(
    params: &ModelParams,
    clients: &[&ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    which: DataSplit,
) -> Result<f64> {
    let mut pooled = Vec::new();
    for c in clients {
        let samples = match which {
            DataSplit::Train => c.train_in(leaves),
            DataSplit::Validation => c.validation_in(leaves),
        };
        pooled.extend(samples);
    }
    dataset_loss(params, &pooled)
}

/// Per-zone outcome of one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRoundReport {
    pub zone_id: ZoneId,
    pub round: u64,
    pub participants: Vec<ClientId>,
    /// Client-mean train loss before / after the update.
    pub pre_train_loss: Option<f64>,
    pub post_train_loss: Option<f64>,
    pub validation_loss: Option<f64>,
    /// Sample-pooled validation loss, for diagnostics.
    pub validation_loss_pooled: Option<f64>,
    pub messages: u64,
    pub skipped: bool,
}

/// Clients that have train data inside the given leaf set, ascending by id.
pub fn eligible_clients<'a>(
    clients: &'a [ClientDataset],
    leaves: &BTreeSet<ZoneId>,
) -> Vec<&'a ClientDataset> {
    clients
        .iter()
        .filter(|c| c.train_samples.iter().any(|s| leaves.contains(&s.zone_tag)))
        .collect()
}

/// Samples clients and runs local training against `params`, returning the
/// participating client ids and their deltas in ascending id order.
///
/// The rng streams are derived from `round_seed` alone, so the same seed
/// reproduces the same participants and deltas regardless of caller context.
pub fn collect_zone_gradients(
    params: &ModelParams,
    clients: &[&ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    config: &RoundConfig,
    round_seed: u64,
) -> Result<(Vec<ClientId>, Vec<Gradient>)> {
    let ids: Vec<ClientId> = clients.iter().map(|c| c.client_id).collect();
    let mut sample_rng = rng_from(&[round_seed, salt::SAMPLE]);
    let sampled = sample_clients(&ids, config.client_sample_fraction, &mut sample_rng)?;
    let by_id: BTreeMap<ClientId, &ClientDataset> =
        clients.iter().map(|c| (c.client_id, *c)).collect();
    let mut participants = Vec::new();
    let mut gradients = Vec::new();
    for id in sampled {
        let client = by_id[&id];
        let train = client.train_in(leaves);
        let mut local_rng = rng_from(&[round_seed, salt::LOCAL, u64::from(id.0)]);
        if let Some(delta) = local_train(
            params,
            &train,
            config.local_epochs,
            config.local_learning_rate,
            config.batch_size,
            &mut local_rng,
        )? {
            participants.push(id);
            gradients.push(delta);
        }
    }
    Ok((participants, gradients))
}

/// One full federated round for one zone: sample → local train → FedAvg →
/// server update. Returns the successor state and a report; when no client
/// produces a gradient the round is skipped and the input state is returned
/// unchanged.
pub fn run_zone_round(
    state: &ZoneModelState,
    clients: &[&ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    config: &RoundConfig,
    ledger: &mut MessageLedger,
    round: u64,
    round_seed: u64,
) -> Result<(ZoneModelState, ZoneRoundReport)> {
    let (participants, gradients) =
        collect_zone_gradients(&state.params, clients, leaves, config, round_seed)?;
    ledger.record_models_sent(state.zone_id, participants.len() as u64);
    ledger.record_gradients_received(state.zone_id, gradients.len() as u64);
    if gradients.is_empty() {
        let report = ZoneRoundReport {
            zone_id: state.zone_id,
            round,
            participants,
            pre_train_loss: zone_loss(&state.params, clients, leaves, DataSplit::Train).ok(),
            post_train_loss: None,
            validation_loss: None,
            validation_loss_pooled: None,
            messages: 0,
            skipped: true,
        };
        return Ok((state.clone(), report));
    }
    let agg = if config.equal_weight_fedavg {
        client_mean(&gradients)?
    } else {
        fedavg(&gradients)?
    };
    let pre_train_loss = zone_loss(&state.params, clients, leaves, DataSplit::Train).ok();
    let mut next = apply_update(state, &agg, config.server_learning_rate)?;
    let post_train_loss = zone_loss(&next.params, clients, leaves, DataSplit::Train).ok();
    let validation_loss = zone_loss(&next.params, clients, leaves, DataSplit::Validation).ok();
    let validation_loss_pooled =
        zone_loss_pooled(&next.params, clients, leaves, DataSplit::Validation).ok();
    if let Some(v) = validation_loss.or(post_train_loss) {
        next.history.push(v);
    }
    let messages = (participants.len() + gradients.len()) as u64;
    let report = ZoneRoundReport {
        zone_id: state.zone_id,
        round,
        participants,
        pre_train_loss,
        post_train_loss,
        validation_loss,
        validation_loss_pooled,
        messages,
        skipped: false,
    };
    Ok((next, report))
}

/// Selects a fraction `p` of the clients holding validation data in the zone
/// and has each evaluate `params` on its validation split restricted to the
/// zone's leaves.
pub fn collect_validation(
    zone_id: ZoneId,
    params: &ModelParams,
    clients: &[&ClientDataset],
    leaves: &BTreeSet<ZoneId>,
    p: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ValidationReport>> {
    let eligible: Vec<&ClientDataset> = clients
        .iter()
        .copied()
        .filter(|c| c.validation_samples.iter().any(|s| leaves.contains(&s.zone_tag)))
        .collect();
    let ids: Vec<ClientId> = eligible.iter().map(|c| c.client_id).collect();
    let selected = sample_clients(&ids, p, rng)?;
    let by_id: BTreeMap<ClientId, &ClientDataset> =
        eligible.iter().map(|c| (c.client_id, *c)).collect();
    let fingerprint = params.fingerprint();
    let mut reports = Vec::new();
    for id in selected {
        let samples = by_id[&id].validation_in(leaves);
        reports.push(ValidationReport {
            client_id: id,
            zone_id,
            params_fingerprint: fingerprint,
            loss: dataset_loss(params, &samples)?,
            sample_count: samples.len() as u64,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelKind, Sample};
    use crate::rng::rng_from;

    fn grad(weights: Vec<f64>, bias: f64, count: u64) -> Gradient {
        Gradient { weights, bias, sample_count: count }
    }

    fn client(id: u32, samples: Vec<(f64, f64)>) -> ClientDataset {
        let mk = |pairs: &[(f64, f64)]| {
            pairs
                .iter()
                .map(|&(x, y)| Sample { features: vec![x], label: y, zone_tag: ZoneId(0) })
                .collect::<Vec<_>>()
        };
        let n = samples.len();
        let split = (n * 4 + 4) / 5;
        ClientDataset {
            client_id: ClientId(id),
            train_samples: mk(&samples[..split.min(n)]),
            validation_samples: mk(&samples[split.min(n)..]),
        }
    }

    #[test]
    fn sampling_full_fraction_returns_everyone() {
        let ids: Vec<ClientId> = (0..5).map(ClientId).collect();
        let mut rng = rng_from(&[1]);
        assert_eq!(sample_clients(&ids, 1.0, &mut rng).unwrap(), ids);
    }

    #[test]
    fn sampling_half_of_four_is_two() {
        let ids: Vec<ClientId> = (0..4).map(ClientId).collect();
        let mut rng = rng_from(&[2]);
        assert_eq!(sample_clients(&ids, 0.5, &mut rng).unwrap().len(), 2);
    }

    #[test]
    fn sampling_is_deterministic_for_a_seed() {
        let ids: Vec<ClientId> = (0..20).map(ClientId).collect();
        let a = sample_clients(&ids, 0.3, &mut rng_from(&[3])).unwrap();
        let b = sample_clients(&ids, 0.3, &mut rng_from(&[3])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fedavg_equal_counts_is_arithmetic_mean() {
        let a = grad(vec![1.0, 2.0], 0.0, 10);
        let b = grad(vec![3.0, 4.0], 0.0, 10);
        let m = fedavg(&[a, b]).unwrap();
        assert_eq!(m.weights, vec![2.0, 3.0]);
        assert_eq!(m.sample_count, 20);
    }

    #[test]
    fn fedavg_single_gradient_is_identity() {
        let a = grad(vec![1.5, -2.5], 0.25, 7);
        let m = fedavg(std::slice::from_ref(&a)).unwrap();
        assert_eq!(m, a);
    }

    #[test]
    fn fedavg_weighted_mean_hand_case() {
        let a = grad(vec![0.0], 0.0, 1);
        let b = grad(vec![4.0], 0.0, 3);
        let m = fedavg(&[a, b]).unwrap();
        assert_eq!(m.weights, vec![3.0]);
    }

    #[test]
    fn fedavg_rejects_empty_and_mismatched() {
        assert!(matches!(fedavg(&[]), Err(Error::EmptyAggregation)));
        let a = grad(vec![1.0], 0.0, 1);
        let b = grad(vec![1.0, 2.0], 0.0, 1);
        assert!(matches!(fedavg(&[a, b]), Err(Error::ShapeMismatch)));
    }

    #[test]
    fn fedavg_is_permutation_invariant_with_equal_weights() {
        let a = grad(vec![1.0], 0.0, 4);
        let b = grad(vec![5.0], 0.0, 4);
        let c = grad(vec![-3.0], 0.0, 4);
        let m1 = fedavg(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let m2 = fedavg(&[c, a, b]).unwrap();
        assert!((m1.weights[0] - m2.weights[0]).abs() < 1e-12);
    }

    fn zero_state() -> ZoneModelState {
        ZoneModelState::new(
            ZoneId(0),
            ModelParams::zeros(1, ModelKind::LinearRegression),
        )
    }

    #[test]
    fn apply_update_zero_lambda_still_advances_round() {
        let s = zero_state();
        let next = apply_update(&s, &grad(vec![2.0], 1.0, 1), 0.0).unwrap();
        assert_eq!(next.params, s.params);
        assert_eq!(next.round, s.round + 1);
    }

    #[test]
    fn apply_update_hand_arithmetic() {
        let mut s = zero_state();
        s.params.weights[0] = 1.0;
        let next = apply_update(&s, &grad(vec![2.0], 0.0, 1), 0.5).unwrap();
        assert_eq!(next.params.weights, vec![2.0]);
    }

    #[test]
    fn apply_update_rejects_non_finite() {
        let s = zero_state();
        let res = apply_update(&s, &grad(vec![f64::INFINITY], 0.0, 1), 1.0);
        assert!(matches!(res, Err(Error::NumericFailure { .. })));
    }

    #[test]
    fn zone_loss_is_client_mean_of_means() {
        // two clients with per-client mean losses 2 and 4 -> 3, independent of sizes
        let a = ClientDataset {
            client_id: ClientId(0),
            train_samples: vec![
                Sample { features: vec![0.0], label: 2.0f64.sqrt(), zone_tag: ZoneId(0) },
            ],
            validation_samples: vec![],
        };
        let b = ClientDataset {
            client_id: ClientId(1),
            train_samples: vec![
                Sample { features: vec![0.0], label: 2.0, zone_tag: ZoneId(0) },
                Sample { features: vec![0.0], label: 2.0, zone_tag: ZoneId(0) },
                Sample { features: vec![0.0], label: 2.0, zone_tag: ZoneId(0) },
            ],
            validation_samples: vec![],
        };
        let params = ModelParams::zeros(1, ModelKind::LinearRegression);
        let leaves = BTreeSet::from([ZoneId(0)]);
        let loss = zone_loss(&params, &[&a, &b], &leaves, DataSplit::Train).unwrap();
        assert!((loss - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zone_loss_single_client_is_its_dataset_loss() {
        let c = client(0, vec![(1.0, 1.0), (2.0, 0.5), (0.5, -1.0), (1.5, 2.0), (-1.0, 0.2)]);
        let params = ModelParams::zeros(1, ModelKind::LinearRegression);
        let leaves = BTreeSet::from([ZoneId(0)]);
        let expected = dataset_loss(&params, &c.train_samples).unwrap();
        assert_eq!(
            zone_loss(&params, &[&c], &leaves, DataSplit::Train).unwrap(),
            expected
        );
    }

    #[test]
    fn zone_loss_matches_nested_loop_oracle() {
        let mut rng = rng_from(&[21]);
        let clients: Vec<ClientDataset> = (0..6)
            .map(|i| {
                let n = rng.gen_range(2..8);
                client(
                    i,
                    (0..n)
                        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                )
            })
            .collect();
        let params = ModelParams { weights: vec![0.3], bias: -0.1, kind: ModelKind::LinearRegression };
        let leaves = BTreeSet::from([ZoneId(0)]);
        // independent two-loop oracle
        let mut client_losses = Vec::new();
        for c in &clients {
            if c.train_samples.is_empty() {
                continue;
            }
            let mut total = 0.0;
            for s in &c.train_samples {
                let e = 0.3 * s.features[0] - 0.1 - s.label;
                total += e * e;
            }
            client_losses.push(total / c.train_samples.len() as f64);
        }
        let oracle = client_losses.iter().sum::<f64>() / client_losses.len() as f64;
        let refs: Vec<&ClientDataset> = clients.iter().collect();
        let got = zone_loss(&params, &refs, &leaves, DataSplit::Train).unwrap();
        assert_eq!(got, oracle);
    }

    #[test]
    fn zone_loss_without_clients_is_an_error() {
        let params = ModelParams::zeros(1, ModelKind::LinearRegression);
        let leaves = BTreeSet::from([ZoneId(0)]);
        assert!(zone_loss(&params, &[], &leaves, DataSplit::Train).is_err());
    }

    #[test]
    fn single_client_round_with_unit_server_lr_adopts_client_params() {
        let c = client(0, vec![(1.0, 1.0), (2.0, 2.0), (0.5, 0.5), (1.5, 1.5), (-1.0, -1.0)]);
        let leaves = BTreeSet::from([ZoneId(0)]);
        let state = zero_state();
        let config = RoundConfig::default();
        let mut ledger = MessageLedger::new();
        let (next, report) =
            run_zone_round(&state, &[&c], &leaves, &config, &mut ledger, 0, 99).unwrap();
        assert!(!report.skipped);
        // reproduce the client's local training from the same derived stream
        let mut local_rng = rng_from(&[99, salt::LOCAL, 0]);
        let delta = local_train(
            &state.params,
            &c.train_samples,
            config.local_epochs,
            config.local_learning_rate,
            config.batch_size,
            &mut local_rng,
        )
        .unwrap()
        .unwrap();
        assert_eq!(next.params.weights[0], delta.weights[0]);
        assert_eq!(next.params.bias, delta.bias);
    }

    #[test]
    fn identical_clients_match_single_client_update() {
        let c0 = client(0, vec![(1.0, 0.8), (0.2, 0.1), (-0.5, -0.4), (0.9, 0.7), (0.4, 0.3)]);
        let mut c1 = c0.clone();
        c1.client_id = ClientId(1);
        let leaves = BTreeSet::from([ZoneId(0)]);
        let state = zero_state();
        let config = RoundConfig::default();
        let mut ledger = MessageLedger::new();
        let (pair, _) =
            run_zone_round(&state, &[&c0, &c1], &leaves, &config, &mut ledger, 0, 7).unwrap();
        let (solo, _) = run_zone_round(&state, &[&c0], &leaves, &config, &mut ledger, 0, 7).unwrap();
        assert_eq!(pair.params, solo.params);
    }

    #[test]
    fn round_without_eligible_clients_is_skipped() {
        let c = client(0, vec![(1.0, 1.0), (2.0, 2.0)]);
        let leaves = BTreeSet::from([ZoneId(5)]); // client's data is in zone 0
        let state = zero_state();
        let mut ledger = MessageLedger::new();
        let (next, report) = run_zone_round(
            &state,
            &[&c],
            &leaves,
            &RoundConfig::default(),
            &mut ledger,
            0,
            1,
        )
        .unwrap();
        assert!(report.skipped);
        assert_eq!(next, state);
    }

    #[test]
    fn convergence_zone_loss_non_increasing() {
        let mut rng = rng_from(&[30]);
        let clients: Vec<ClientDataset> = (0..4)
            .map(|i| {
                client(
                    i,
                    (0..10)
                        .map(|_| {
                            let x: f64 = rng.gen_range(-1.0..1.0);
                            (x, 0.8 * x + 0.1)
                        })
                        .collect(),
                )
            })
            .collect();
        let refs: Vec<&ClientDataset> = clients.iter().collect();
        let leaves = BTreeSet::from([ZoneId(0)]);
        let mut state = zero_state();
        let config = RoundConfig { local_learning_rate: 0.05, local_epochs: 5, ..Default::default() };
        let mut ledger = MessageLedger::new();
        let mut losses = Vec::new();
        for t in 0..20 {
            let (next, report) =
                run_zone_round(&state, &refs, &leaves, &config, &mut ledger, t, 1000 + t).unwrap();
            losses.push(report.post_train_loss.unwrap());
            state = next;
        }
        for w in losses.windows(2).skip(5) {
            assert!(w[1] <= w[0] + 1e-9, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn validation_reports_mean_matches_zone_loss() {
        let clients: Vec<ClientDataset> = (0..5)
            .map(|i| {
                client(
                    i,
                    vec![(0.1, 0.4), (0.7, -0.3), (0.2, 0.9), (-0.6, 0.5), (0.3, 0.3), (0.8, 0.1)],
                )
            })
            .collect();
        let refs: Vec<&ClientDataset> = clients.iter().collect();
        let params = ModelParams { weights: vec![0.2], bias: 0.1, kind: ModelKind::LinearRegression };
        let leaves = BTreeSet::from([ZoneId(0)]);
        let mut rng = rng_from(&[40]);
        let reports =
            collect_validation(ZoneId(0), &params, &refs, &leaves, 1.0, &mut rng).unwrap();
        assert_eq!(reports.len(), 5);
        let mean = reports.iter().map(|r| r.loss).sum::<f64>() / reports.len() as f64;
        let expected = zone_loss(&params, &refs, &leaves, DataSplit::Validation).unwrap();
        assert!((mean - expected).abs() < 1e-12);
        // fixed seed reproducibility at p = 0.5
        let a = collect_validation(ZoneId(0), &params, &refs, &leaves, 0.5, &mut rng_from(&[41]))
            .unwrap();
        let b = collect_validation(ZoneId(0), &params, &refs, &leaves, 0.5, &mut rng_from(&[41]))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ledger_counts_messages_per_round() {
        let clients: Vec<ClientDataset> = (0..3)
            .map(|i| client(i, vec![(1.0, 1.0), (0.5, 0.5), (0.2, 0.2), (0.9, 0.9), (0.1, 0.1)]))
            .collect();
        let refs: Vec<&ClientDataset> = clients.iter().collect();
        let leaves = BTreeSet::from([ZoneId(0)]);
        let mut ledger = MessageLedger::new();
        let state = zero_state();
        run_zone_round(&state, &refs, &leaves, &RoundConfig::default(), &mut ledger, 0, 5).unwrap();
        let counters = ledger.zone(ZoneId(0));
        assert_eq!(counters.models_sent, 3);
        assert_eq!(counters.gradients_received, 3);
    }
}
