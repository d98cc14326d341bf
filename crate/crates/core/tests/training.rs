use score_core::mlp::{Activation, MlpModel};
use score_core::objectives::{AttackConfig, Objective};
use score_core::toydist::ToyDist;
use score_core::trainer::{sup_gap, train, BatchMode, TrainConfig};
use score_core::MetricSpec;

fn cfg(objective: Objective, steps: usize) -> TrainConfig {
    TrainConfig {
        objective,
        spec: MetricSpec::KL,
        steps,
        batch: BatchMode::FullQuadrature { points: 81 },
        eval_points: 81,
        record_every: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn score_training_approaches_the_conditional() {
    let d = ToyDist::default();
    let init = MlpModel::two_hidden(32, Activation::Tanh, 0).unwrap();
    let before = sup_gap(&init, &d, 401);
    let out = train(
        init,
        &d,
        &AttackConfig::default(),
        &cfg(Objective::Score, 150),
    )
    .unwrap();
    let after = sup_gap(&out.model, &d, 401);
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert_eq!(out.records.len(), 16);
    assert_eq!(out.records.last().unwrap().step, 150);
}

#[test]
fn training_is_bitwise_reproducible() {
    let d = ToyDist::default();
    let run = || {
        let init = MlpModel::two_hidden(16, Activation::Tanh, 9).unwrap();
        train(
            init,
            &d,
            &AttackConfig::default(),
            &cfg(Objective::Madry, 30),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.records, b.records);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let d = ToyDist::default();
    let init = MlpModel::two_hidden(8, Activation::Relu, 2).unwrap();
    let out = train(
        init,
        &d,
        &AttackConfig::default(),
        &cfg(Objective::Trades, 10),
    )
    .unwrap();
    let json = serde_json::to_string(&out.model).unwrap();
    let back: MlpModel = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.model);
}

#[test]
fn config_round_trips_through_json() {
    let c = TrainConfig {
        batch: BatchMode::Samples {
            n: 6,
            seed: 7,
            minibatch: None,
        },
        monitor: Some(MetricSpec::L1),
        ..cfg(Objective::Score, 5)
    };
    let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    let partial: TrainConfig = serde_json::from_str(r#"{"lr": 0.05, "spec": "SE"}"#).unwrap();
    assert_eq!(partial.lr, 0.05);
    assert_eq!(partial.spec, MetricSpec::SE);
    assert_eq!(partial.steps, TrainConfig::default().steps);
}

#[test]
fn observer_sees_every_recorded_model() {
    use score_core::trainer::train_observed;
    let d = ToyDist::default();
    let init = MlpModel::two_hidden(8, Activation::Tanh, 1).unwrap();
    let mut seen = Vec::new();
    let out = train_observed(
        init,
        &d,
        &AttackConfig::default(),
        &cfg(Objective::Score, 20),
        |r, m| {
            seen.push((r.step, m.params().to_vec()));
        },
    )
    .unwrap();
    let steps: Vec<usize> = seen.iter().map(|s| s.0).collect();
    assert_eq!(steps, [0, 10, 20]);
    assert_eq!(seen[2].1, out.model.params());
}
