//! Runtime oracle suite: re-derives key numerical results by independent
//! means (finite differences, scalar-loop aggregation, brute-force closure
//! and argmax) and compares them against the production code paths.

use crate::error::Result;
use crate::model::{
    analytic_gradient, dataset_loss, ClientDataset, ClientId, Gradient, ModelKind, ModelParams,
    Sample,
};
use crate::protocol::{fedavg, MessageLedger, RoundConfig, ZoneModelState};
use crate::rng::rng_from;
use crate::topology::{ZoneId, ZonePartition};
use crate::zgd::attention_coefficients;
use crate::zms::{propose_merge, ZmsConfig};
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Signature of the attention function under test; the indirection lets the
/// test suite inject a broken implementation and watch the check fail.
pub type AttentionFn = dyn Fn(&Gradient, &[Gradient], bool) -> Result<Vec<f64>>;

fn random_params(dim: usize, kind: ModelKind, rng: &mut impl Rng) -> ModelParams {
    ModelParams {
        weights: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        bias: rng.gen_range(-1.0..1.0),
        kind,
    }
}

fn random_samples(dim: usize, n: usize, kind: ModelKind, rng: &mut impl Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            features: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            label: match kind {
                ModelKind::LinearRegression => rng.gen_range(-2.0..2.0),
                ModelKind::LogisticClassification => {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
            zone_tag: ZoneId(0),
        })
        .collect()
}

/// Analytic gradient vs central finite differences of `dataset_loss`, 100
/// random cases over both model kinds; max relative error must stay < 1e-5.
pub fn check_gradient_finite_difference() -> CheckReport {
    let mut rng = rng_from(&[0x5e1f, 1]);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let kind = if case % 2 == 0 {
            ModelKind::LinearRegression
        } else {
            ModelKind::LogisticClassification
        };
        let dim = rng.gen_range(1..6);
        let params = random_params(dim, kind, &mut rng);
        let samples = random_samples(dim, rng.gen_range(1..10), kind, &mut rng);
        let analytic = analytic_gradient(&params, &samples).unwrap();
        let fd_at = |mutate: &dyn Fn(&mut ModelParams, f64)| {
            let mut plus = params.clone();
            mutate(&mut plus, eps);
            let mut minus = params.clone();
            mutate(&mut minus, -eps);
            (dataset_loss(&plus, &samples).unwrap() - dataset_loss(&minus, &samples).unwrap())
                / (2.0 * eps)
        };
        for j in 0..dim {
            let fd = fd_at(&|p, e| p.weights[j] += e);
            let denom = analytic.weights[j].abs().max(fd.abs()).max(1.0);
            worst = worst.max((analytic.weights[j] - fd).abs() / denom);
        }
        let fd = fd_at(&|p, e| p.bias += e);
        let denom = analytic.bias.abs().max(fd.abs()).max(1.0);
        worst = worst.max((analytic.bias - fd).abs() / denom);
    }
    CheckReport {
        name: "gradient-finite-difference",
        passed: worst < 1e-5,
        detail: format!("max relative error {worst:.3e} (limit 1e-5)"),
    }
}

/// Attention coefficients sum to 1 within 1e-9 and are strictly positive on
/// random gradient sets; runs against the provided implementation.
pub fn check_softmax_normalization(attention: &AttentionFn) -> CheckReport {
    let mut rng = rng_from(&[0x5e1f, 2]);
    for _ in 0..100 {
        let dim = rng.gen_range(1..6);
        let n = rng.gen_range(1..6);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| Gradient {
            weights: (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            bias: rng.gen_range(-3.0..3.0),
            sample_count: 1,
        };
        let own = mk(&mut rng);
        let neighbors: Vec<Gradient> = (0..n).map(|_| mk(&mut rng)).collect();
        let betas = match attention(&own, &neighbors, false) {
            Ok(b) => b,
            Err(e) => {
                return CheckReport {
                    name: "attention-softmax-normalization",
                    passed: false,
                    detail: format!("attention failed: {e}"),
                }
            }
        };
        let sum: f64 = betas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || betas.iter().any(|&b| !(b > 0.0)) {
            return CheckReport {
                name: "attention-softmax-normalization",
                passed: false,
                detail: format!("betas {betas:?} sum {sum}"),
            };
        }
    }
    CheckReport {
        name: "attention-softmax-normalization",
        passed: true,
        detail: "100 random cases: sum within 1e-9, all coefficients positive".into(),
    }
}

/// `fedavg` equals a scalar-loop weighted-mean oracle bit-for-bit on 100
/// random cases.
pub fn check_fedavg_weighted_mean() -> CheckReport {
    let mut rng = rng_from(&[0x5e1f, 3]);
    for _ in 0..100 {
        let dim = rng.gen_range(1..6);
        let n = rng.gen_range(1..8);
        let gradients: Vec<Gradient> = (0..n)
            .map(|_| Gradient {
                weights: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                bias: rng.gen_range(-2.0..2.0),
                sample_count: rng.gen_range(1..50),
            })
            .collect();
        let got = fedavg(&gradients).unwrap();
        // oracle: same expression, plain scalar loops
        let total: f64 = gradients.iter().map(|g| g.sample_count as f64).sum();
        let mut want_w = vec![0.0; dim];
        let mut want_b = 0.0;
        for g in &gradients {
            let scale = g.sample_count as f64 / total;
            for j in 0..dim {
                want_w[j] += scale * g.weights[j];
            }
            want_b += scale * g.bias;
        }
        let exact = got.bias.to_bits() == want_b.to_bits()
            && got
                .weights
                .iter()
                .zip(&want_w)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !exact {
            return CheckReport {
                name: "fedavg-weighted-mean",
                passed: false,
                detail: format!("got {:?} want {:?}/{want_b}", got, want_w),
            };
        }
    }
    CheckReport {
        name: "fedavg-weighted-mean",
        passed: true,
        detail: "100 random cases match the scalar oracle exactly".into(),
    }
}

/// Random merge/split sequences on a 3×3 grid: the incrementally maintained
/// adjacency must equal the recomputed closure and the leaf partition must
/// stay exact after every operation.
pub fn check_adjacency_closure() -> CheckReport {
    let mut rng = rng_from(&[0x5e1f, 4]);
    for seq in 0..40 {
        let mut partition = ZonePartition::grid(3, 3).unwrap();
        for op in 0..20 {
            let merge = rng.gen_bool(0.65);
            if merge {
                let pairs: Vec<(ZoneId, ZoneId)> = partition.adjacency().iter().copied().collect();
                if pairs.is_empty() {
                    continue;
                }
                let (a, b) = pairs[rng.gen_range(0..pairs.len())];
                let (next, _) = partition.apply_merge(a, b).unwrap();
                partition = next;
            } else {
                let merged: Vec<ZoneId> = partition
                    .active_zones()
                    .into_iter()
                    .filter(|&z| !partition.tree(z).unwrap().is_leaf())
                    .collect();
                if merged.is_empty() {
                    continue;
                }
                let zone = merged[rng.gen_range(0..merged.len())];
                let subs = partition.tree(zone).unwrap().sub_zones(2);
                if subs.is_empty() {
                    continue;
                }
                let candidate = subs[rng.gen_range(0..subs.len())].id();
                let (next, _) = partition.apply_split(zone, candidate).unwrap();
                partition = next;
            }
            if partition.adjacency() != &partition.atomic_adjacency_closure() {
                return CheckReport {
                    name: "adjacency-closure",
                    passed: false,
                    detail: format!("divergence in sequence {seq} op {op}"),
                };
            }
            if !partition.leaf_partition_holds() {
                return CheckReport {
                    name: "adjacency-closure",
                    passed: false,
                    detail: format!("leaf partition broken in sequence {seq} op {op}"),
                };
            }
        }
    }
    CheckReport {
        name: "adjacency-closure",
        passed: true,
        detail: "40 random merge/split sequences agree with the recomputed closure".into(),
    }
}

/// On a planted three-zone chain, the greedy best-neighbor choice must equal
/// the brute-force argmax over the logged candidate gains.
pub fn check_greedy_merge_argmax() -> CheckReport {
    let partition = ZonePartition::new(
        (0..3).map(|i| (ZoneId(i), format!("Z{i}"))).collect(),
        vec![(ZoneId(0), ZoneId(1)), (ZoneId(1), ZoneId(2))],
    )
    .unwrap();
    let truth = |zone: u64| if zone == 2 { -1.0 } else { 1.0 };
    let mut rng = rng_from(&[0x5e1f, 5]);
    let mut clients = Vec::new();
    for zone in 0..3u64 {
        for c in 0..4u32 {
            let samples: Vec<Sample> = (0..10)
                .map(|_| {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    Sample { features: vec![x], label: truth(zone) * x, zone_tag: ZoneId(zone) }
                })
                .collect();
            clients.push(ClientDataset {
                client_id: ClientId(zone as u32 * 4 + c),
                train_samples: samples[..8].to_vec(),
                validation_samples: samples[8..].to_vec(),
            });
        }
    }
    let states: BTreeMap<ZoneId, ZoneModelState> = (0..3)
        .map(|i| {
            (
                ZoneId(i),
                ZoneModelState::new(
                    ZoneId(i),
                    ModelParams {
                        weights: vec![truth(i) * 0.9],
                        bias: 0.0,
                        kind: ModelKind::LinearRegression,
                    },
                ),
            )
        })
        .collect();
    let round_cfg = RoundConfig::default();
    let zms_cfg = ZmsConfig::default();
    for zone in 0..3u64 {
        let mut ledger = MessageLedger::new();
        let decision = match propose_merge(
            &partition,
            ZoneId(zone),
            &states,
            &clients,
            &round_cfg,
            &zms_cfg,
            0,
            0x5e1f,
            &mut ledger,
        ) {
            Ok(d) => d,
            Err(e) => {
                return CheckReport {
                    name: "greedy-merge-argmax",
                    passed: false,
                    detail: format!("propose_merge failed: {e}"),
                }
            }
        };
        if let Some(decision) = decision {
            let brute = decision
                .candidates
                .iter()
                .filter(|c| c.admitted)
                .max_by(|a, b| {
                    a.gain().partial_cmp(&b.gain()).unwrap().then(b.neighbor.cmp(&a.neighbor))
                })
                .map(|c| c.neighbor);
            if brute != Some(decision.best_neighbor) {
                return CheckReport {
                    name: "greedy-merge-argmax",
                    passed: false,
                    detail: format!(
                        "zone {zone}: greedy {:?} vs brute force {brute:?}",
                        decision.best_neighbor
                    ),
                };
            }
        }
    }
    CheckReport {
        name: "greedy-merge-argmax",
        passed: true,
        detail: "greedy best-neighbor equals brute-force argmax on all decisions".into(),
    }
}

/// The full suite with a custom attention implementation (test hook).
pub fn run_selfcheck_with(attention: &AttentionFn) -> Vec<CheckReport> {
    vec![
        check_gradient_finite_difference(),
        check_softmax_normalization(attention),
        check_fedavg_weighted_mean(),
        check_adjacency_closure(),
        check_greedy_merge_argmax(),
    ]
}

/// The full oracle suite against the production implementations.
pub fn run_selfcheck() -> Vec<CheckReport> {
    run_selfcheck_with(&|own, neighbors, cosine| attention_coefficients(own, neighbors, cosine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sigmoid;

    #[test]
    fn fresh_build_passes_every_check() {
        let reports = run_selfcheck();
        assert_eq!(reports.len(), 5);
        for r in &reports {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
    }

    #[test]
    fn sign_flipped_softmax_fails_the_normalization_check() {
        // mutated attention: sign-flipped similarity and an unnormalized tail
        let broken = |own: &Gradient, neighbors: &[Gradient], _cosine: bool| -> Result<Vec<f64>> {
            Ok(neighbors.iter().map(|n| sigmoid(-own.dot(n)) - 0.5).collect())
        };
        let report = check_softmax_normalization(&broken);
        assert!(!report.passed);
    }
}
