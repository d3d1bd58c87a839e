//! Synthetic scenario generation: planted per-zone ground-truth models and
//! mobile clients whose data spans one or more zones.
//!
//! Each atomic zone gets a ground truth w_z = w_base + heterogeneity · u_z
//! with u_z a random unit direction, so `heterogeneity` directly controls how
//! far zone optima sit apart. Clients draw a zone set from a mobility
//! distribution and generate labeled samples per zone from that zone's truth.

use crate::error::{Error, Result};
use crate::model::{ClientDataset, ClientId, ModelKind, ModelParams, Sample};
use crate::protocol::RoundConfig;
use crate::rng::{rng_from, salt};
use crate::topology::{ZoneId, ZonePartition};
use crate::zgd::ZgdConfig;
use crate::zms::ZmsConfig;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// How the atomic zones and their adjacency are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum ZoneLayout {
    /// rows × cols grid with 4-neighborhood adjacency.
    Grid { rows: usize, cols: usize },
    /// Explicit zones and edges.
    Explicit { zones: Vec<u64>, edges: Vec<(u64, u64)> },
    /// Zones and edges read from a partition file (see `config`).
    File { partition_file: String },
}

impl Default for ZoneLayout {
    fn default() -> Self {
        ZoneLayout::Grid { rows: 3, cols: 3 }
    }
}

impl ZoneLayout {
    pub fn build(&self) -> Result<ZonePartition> {
        match self {
            ZoneLayout::Grid { rows, cols } => ZonePartition::grid(*rows, *cols),
            ZoneLayout::Explicit { zones, edges } => ZonePartition::new(
                zones.iter().map(|&z| (ZoneId(z), format!("Z{z}"))).collect(),
                edges.iter().map(|&(a, b)| (ZoneId(a), ZoneId(b))).collect(),
            ),
            ZoneLayout::File { partition_file } => {
                let text = std::fs::read_to_string(partition_file)?;
                let (zones, edges) = crate::config::parse_partition_text(&text)?;
                ZonePartition::new(zones, edges)
            }
        }
    }
}

/// Distribution over how many zones a client has data in, plus optional
/// per-zone visit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    /// zone_count_probs[k-1] = probability a client has data in exactly k zones.
    pub zone_count_probs: Vec<f64>,
    /// Relative weight of each atomic zone when drawing a client's zone set;
    /// uniform when empty. Indexed in ascending atomic-zone-id order.
    pub zone_weights: Vec<f64>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            // roughly half the clients stay in one zone, a long tail reaches
            // five; interpolated between those anchors
            zone_count_probs: vec![0.49, 0.20, 0.13, 0.098, 0.082],
            zone_weights: Vec::new(),
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self, n_zones: usize) -> Result<()> {
        if self.zone_count_probs.is_empty() {
            return Err(Error::Config("mobility.zone_count_probs must not be empty".into()));
        }
        if self.zone_count_probs.len() > n_zones {
            return Err(Error::Config(format!(
                "mobility allows up to {} zones per client but only {} zones exist",
                self.zone_count_probs.len(),
                n_zones
            )));
        }
        if self.zone_count_probs.iter().any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite()) {
            return Err(Error::Config("mobility probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = self.zone_count_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "mobility.zone_count_probs must sum to 1, got {sum}"
            )));
        }
        if !self.zone_weights.is_empty() {
            if self.zone_weights.len() != n_zones {
                return Err(Error::Config(format!(
                    "mobility.zone_weights has {} entries for {} zones",
                    self.zone_weights.len(),
                    n_zones
                )));
            }
            if self.zone_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                return Err(Error::Config("mobility.zone_weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Which training strategy a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    GlobalFl,
    StaticZoneFl,
    Zms,
    Zgd,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::GlobalFl, Strategy::StaticZoneFl, Strategy::Zms, Strategy::Zgd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::GlobalFl => "global_fl",
            Strategy::StaticZoneFl => "static_zone_fl",
            Strategy::Zms => "zms",
            Strategy::Zgd => "zgd",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global_fl" | "global" => Ok(Strategy::GlobalFl),
            "static_zone_fl" | "static" => Ok(Strategy::StaticZoneFl),
            "zms" => Ok(Strategy::Zms),
            "zgd" => Ok(Strategy::Zgd),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected global_fl, static_zone_fl, zms, or zgd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub rounds: u64,
    pub strategy: Strategy,
    pub model: ModelKind,
    pub feature_dim: usize,
    pub n_clients: usize,
    pub samples_per_client_zone: usize,
    /// Dispersion of per-zone ground truths around the shared base model.
    pub heterogeneity: f64,
    pub noise_std: f64,
    pub zones: ZoneLayout,
    /// Zone pairs merged before the run starts (e.g. to plant an over-split
    /// or mis-merged region for adaptation experiments).
    pub initial_merges: Vec<(u64, u64)>,
    pub mobility: MobilityConfig,
    pub round: RoundConfig,
    pub zms: ZmsConfig,
    pub zgd: ZgdConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            rounds: 200,
            strategy: Strategy::StaticZoneFl,
            model: ModelKind::LinearRegression,
            feature_dim: 8,
            n_clients: 60,
            samples_per_client_zone: 40,
            heterogeneity: 0.8,
            noise_std: 0.3,
            zones: ZoneLayout::default(),
            initial_merges: Vec::new(),
            mobility: MobilityConfig::default(),
            round: RoundConfig::default(),
            zms: ZmsConfig::default(),
            zgd: ZgdConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be >= 1".into()));
        }
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be >= 1".into()));
        }
        if self.samples_per_client_zone < 5 {
            return Err(Error::Config(
                "samples_per_client_zone must be >= 5 so the 4:1 split leaves validation data"
                    .into(),
            ));
        }
        if !(self.heterogeneity >= 0.0) || !self.heterogeneity.is_finite() {
            return Err(Error::Config("heterogeneity must be a finite value >= 0".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config("noise_std must be a finite value >= 0".into()));
        }
        let partition = self.zones.build()?;
        self.mobility.validate(partition.atomic_zone_ids().len())?;
        self.round.validate()?;
        self.zms.validate()?;
        self.zgd.validate()?;
        for &(a, b) in &self.initial_merges {
            if a == b {
                return Err(Error::Config(format!("initial merge of zone {a} with itself")));
            }
        }
        Ok(())
    }
}

/// The per-zone ground-truth models a scenario was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub per_zone: BTreeMap<ZoneId, ModelParams>,
}

/// Standard normal draw via Box-Muller from two uniform variates.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random direction of unit Euclidean norm in `dim` dimensions.
fn unit_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draws an index proportional to `weights` among entries not yet taken.
fn weighted_pick(weights: &[f64], taken: &[bool], rng: &mut impl Rng) -> usize {
    let total: f64 = weights
        .iter()
        .zip(taken)
        .filter(|(_, &t)| !t)
        .map(|(w, _)| *w)
        .sum();
    let mut target = rng.gen_range(0.0..total);
    let mut last = 0;
    for (i, (w, &t)) in weights.iter().zip(taken).enumerate() {
        if t {
            continue;
        }
        last = i;
        if target < *w {
            return i;
        }
        target -= *w;
    }
    last
}

/// Generates the clients, planted truths, and starting partition for a
/// scenario. Deterministic in `config.seed`; each client's data stream is
/// derived independently of the others.
pub fn generate_scenario(
    config: &ScenarioConfig,
) -> Result<(Vec<ClientDataset>, PlantedTruth, ZonePartition)> {
    config.validate()?;
    let mut partition = config.zones.build()?;
    let zone_ids = partition.atomic_zone_ids();
    let d = config.feature_dim;

    let mut truth_rng = rng_from(&[config.seed, salt::SCENARIO, 0]);
    let mut base = ModelParams::zeros(d, config.model);
    for w in &mut base.weights {
        *w = truth_rng.gen_range(-1.0..1.0);
    }
    base.bias = truth_rng.gen_range(-0.5..0.5);
    let mut per_zone = BTreeMap::new();
    for &z in &zone_ids {
        let mut truth = base.clone();
        if config.heterogeneity > 0.0 {
            let u = unit_direction(d + 1, &mut truth_rng);
            for (w, ui) in truth.weights.iter_mut().zip(&u) {
                *w += config.heterogeneity * ui;
            }
            truth.bias += config.heterogeneity * u[d];
        } else {
            // keep the rng stream aligned so heterogeneity is the only change
            let _ = unit_direction(d + 1, &mut truth_rng);
        }
        per_zone.insert(z, truth);
    }
    let truth = PlantedTruth { per_zone };

    let weights = if config.mobility.zone_weights.is_empty() {
        vec![1.0; zone_ids.len()]
    } else {
        config.mobility.zone_weights.clone()
    };
    let n_val = config.samples_per_client_zone / 5;
    let mut clients = Vec::with_capacity(config.n_clients);
    for c in 0..config.n_clients {
        let mut rng = rng_from(&[config.seed, salt::SCENARIO, 1, c as u64]);
        // number of zones this client has data in
        let roll: f64 = rng.gen_range(0.0..1.0);
        let mut k = config.mobility.zone_count_probs.len();
        let mut acc = 0.0;
        for (i, p) in config.mobility.zone_count_probs.iter().enumerate() {
            acc += p;
            if roll < acc {
                k = i + 1;
                break;
            }
        }
        let mut taken = vec![false; zone_ids.len()];
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let idx = weighted_pick(&weights, &taken, &mut rng);
            taken[idx] = true;
            picked.push(zone_ids[idx]);
        }
        picked.sort();
        let mut train_samples = Vec::new();
        let mut validation_samples = Vec::new();
        for z in picked {
            let w_z = &truth.per_zone[&z];
            for i in 0..config.samples_per_client_zone {
                let features: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let noise = if config.noise_std > 0.0 {
                    config.noise_std * standard_normal(&mut rng)
                } else {
                    0.0
                };
                let score = w_z.score(&features) + noise;
                let label = match config.model {
                    ModelKind::LinearRegression => score,
                    ModelKind::LogisticClassification => {
                        if score > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                let sample = Sample { features, label, zone_tag: z };
                if i < config.samples_per_client_zone - n_val {
                    train_samples.push(sample);
                } else {
                    validation_samples.push(sample);
                }
            }
        }
        clients.push(ClientDataset {
            client_id: ClientId(c as u32),
            train_samples,
            validation_samples,
        });
    }

    for &(a, b) in &config.initial_merges {
        let (next, _) = partition.apply_merge(partition.covering_zone(ZoneId(a))?, partition.covering_zone(ZoneId(b))?)?;
        partition = next;
    }

    Ok((clients, truth, partition))
}

/// SHA-256 over a canonical byte encoding of the client datasets; equal
/// hashes mean bit-identical data.
pub fn dataset_hash(clients: &[ClientDataset]) -> String {
    let mut hasher = Sha256::new();
    for client in clients {
        hasher.update(client.client_id.0.to_le_bytes());
        for (tag, samples) in
            [(0u8, &client.train_samples), (1u8, &client.validation_samples)]
        {
            hasher.update([tag]);
            hasher.update((samples.len() as u64).to_le_bytes());
            for s in samples {
                hasher.update(s.zone_tag.0.to_le_bytes());
                hasher.update(s.label.to_bits().to_le_bytes());
                for x in &s.features {
                    hasher.update(x.to_bits().to_le_bytes());
                }
            }
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
