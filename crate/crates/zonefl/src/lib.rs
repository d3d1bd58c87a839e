//! Zone-based federated learning at desk scale.
//!
//! Clients hold data in one or more geographic zones; each zone trains its
//! own model federatedly. On top of that static picture the library provides
//! two adaptation mechanisms: zone merge/split (ZMS), which greedily reshapes
//! the zone partition when validation losses justify it, and zone gradient
//! diffusion (ZGD), which keeps zones fixed but mixes in attention-weighted
//! gradients that neighbor zones' clients compute against a zone's model.
//!
//! The `examples/` directory is the guided tour: each example runs one major
//! capability end to end on a synthetic planted scenario. The `zonefl` binary
//! wraps the same library for config-driven batch runs.

pub mod config;
pub mod error;
pub mod model;
pub mod output;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod selfcheck;
pub mod sim;
pub mod topology;
pub mod zgd;
pub mod zms;

pub mod cli;

pub use error::{Error, Result};
pub use model::{ClientDataset, ClientId, Gradient, ModelKind, ModelParams, Sample};
pub use protocol::{MessageLedger, RoundConfig, ZoneModelState};
pub use scenario::{
    generate_scenario, MobilityConfig, PlantedTruth, ScenarioConfig, Strategy, ZoneLayout,
};
pub use sim::{run_strategy, RoundRow, StrategyResult};
pub use topology::{MergeTree, ZoneId, ZonePartition};
pub use zgd::ZgdConfig;
pub use zms::{ZmsConfig, ZmsEvent};
