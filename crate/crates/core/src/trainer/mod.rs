//! Deterministic first-order training with per-step trajectory records.
//!
//! Gradients pass through the inner maximization with the maximizer frozen
//! at its current position for the step. Records are evaluated on a fixed
//! quadrature grid of the distribution, independent of the training batch.

mod onset;
mod optim;

pub use onset::{detect_overfit_onset, OverfitOnset};
pub use optim::{Optimizer, OptimizerKind};

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{Classifier, MlpModel};
use crate::objectives::{
    clip_loss, loss_and_grad, AttackConfig, BallGrid, ClipConfig, ModelTable, Objective,
    TradesConfig,
};
use crate::rng::{derive_seed, seeded};
use crate::simplex::MetricSpec;
use crate::toydist::{EvalSet, ToyDist};

/// Where the training loss is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchMode {
    /// Density-weighted trapezoid grid with `points` nodes.
    FullQuadrature { points: usize },
    /// `n` sampled inputs with their exact conditionals as targets. With
    /// `minibatch`, each step draws that many of them with replacement.
    Samples {
        n: usize,
        seed: u64,
        #[serde(default)]
        minibatch: Option<usize>,
    },
}

impl Default for BatchMode {
    fn default() -> Self {
        Self::FullQuadrature { points: 161 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub spec: MetricSpec,
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch: BatchMode,
    pub clip: ClipConfig,
    pub trades: TradesConfig,
    pub record_every: usize,
    /// Quadrature nodes for the recorded risks.
    pub eval_points: usize,
    /// Metric for `r_score`; defaults to the distance companion of `spec`.
    pub monitor: Option<MetricSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Score,
            spec: MetricSpec::KL,
            steps: 500,
            optimizer: OptimizerKind::Adam,
            lr: 1e-2,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch: BatchMode::default(),
            clip: ClipConfig::default(),
            trades: TradesConfig::default(),
            record_every: 1,
            eval_points: 161,
            monitor: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.steps < 1 {
            return bad("train.steps must be at least 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("train.lr must be positive");
        }
        if self.record_every < 1 {
            return bad("train.record_every must be at least 1");
        }
        if self.eval_points < 2 {
            return bad("train.eval_points must be at least 2");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("train.beta1 and train.beta2 must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("train.momentum must lie in [0, 1)");
        }
        match self.batch {
            BatchMode::FullQuadrature { points } if points < 2 => {
                return bad("train.batch.points must be at least 2")
            }
            BatchMode::Samples { n, minibatch, .. } if n < 1 || minibatch == Some(0) => {
                return bad("train.batch.n and train.batch.minibatch must be positive")
            }
            _ => {}
        }
        self.clip.validate()?;
        if self.objective == Objective::Trades {
            self.trades.validate()?;
        }
        Ok(())
    }

    /// The metric under which `r_score` and the sandwich residuals are reported.
    pub fn monitor_spec(&self) -> MetricSpec {
        self.monitor
            .unwrap_or_else(|| self.spec.distance_companion())
    }
}

/// One row of a training trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub train_loss: f64,
    /// Madry risk under the training metric.
    pub r_madry: f64,
    /// Self-consistent risk under the monitor metric.
    pub r_score: f64,
    /// Smoothness constant under the training metric.
    pub c_const: f64,
    pub std01: f64,
    pub madry01: f64,
    pub score01: f64,
    /// `R_score - |R_madry - C|` under the distance companion.
    pub thm1_lo_resid: f64,
    /// `R_madry + C - R_score` under the distance companion.
    pub thm1_hi_resid: f64,
}

impl TrajectoryRecord {
    pub const CSV_HEADER: &'static str =
        "step,train_loss,r_madry,r_score,c_const,std01,madry01,score01,thm1_lo_resid,thm1_hi_resid";

    pub fn csv_fields(&self) -> [f64; 9] {
        [
            self.train_loss,
            self.r_madry,
            self.r_score,
            self.c_const,
            self.std01,
            self.madry01,
            self.score01,
            self.thm1_lo_resid,
            self.thm1_hi_resid,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] Error),
    /// The batch loss became NaN or infinite; `partial` holds the model
    /// before the failing step and every record made so far.
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize, partial: TrainOutcome },
}

/// Evaluates the recorded quantities on a fixed grid.
pub struct Recorder {
    grid: BallGrid,
    spec: MetricSpec,
    monitor: MetricSpec,
    companion: MetricSpec,
    c_spec: f64,
    c_companion: f64,
}

impl Recorder {
    pub fn new(dist: &ToyDist, atk: &AttackConfig, cfg: &TrainConfig) -> Result<Self> {
        let grid = BallGrid::new(dist, dist.quadrature(cfg.eval_points), atk.ball);
        let companion = cfg.spec.distance_companion();
        Ok(Self {
            c_spec: grid.smoothness(cfg.spec)?,
            c_companion: grid.smoothness(companion)?,
            spec: cfg.spec,
            monitor: cfg.monitor_spec(),
            companion,
            grid,
        })
    }

    pub fn grid(&self) -> &BallGrid {
        &self.grid
    }

    pub fn record<M: Classifier>(
        &self,
        model: &M,
        step: usize,
        train_loss: f64,
    ) -> Result<TrajectoryRecord> {
        self.record_table(&self.grid.model_table(model), step, train_loss)
    }

    /// [`Self::record`] from a table already evaluated on [`Self::grid`].
    pub fn record_table(
        &self,
        t: &ModelTable,
        step: usize,
        train_loss: f64,
    ) -> Result<TrajectoryRecord> {
        let r_madry = self.grid.madry(self.spec, t)?.value;
        let r_score = self.grid.score(self.monitor, t)?.value;
        let (m_c, s_c) = (
            if self.companion == self.spec {
                r_madry
            } else {
                self.grid.madry(self.companion, t)?.value
            },
            if self.companion == self.monitor {
                r_score
            } else {
                self.grid.score(self.companion, t)?.value
            },
        );
        let z = self.grid.zero_one(t);
        Ok(TrajectoryRecord {
            step,
            train_loss,
            r_madry,
            r_score,
            c_const: self.c_spec,
            std01: z.std01,
            madry01: z.madry01,
            score01: z.score01,
            thm1_lo_resid: s_c - (m_c - self.c_companion).abs(),
            thm1_hi_resid: m_c + self.c_companion - s_c,
        })
    }
}

fn batch_grid(dist: &ToyDist, atk: &AttackConfig, points: &[f64], idx: &[usize]) -> BallGrid {
    let xs = EvalSet::uniform(idx.iter().map(|&i| points[i]).collect());
    BallGrid::new(dist, xs, atk.ball)
}

/// Train `model` on `cfg.objective`. Records are taken before the update at
/// every step divisible by `record_every`, plus once after the final step.
pub fn train(
    model: MlpModel,
    dist: &ToyDist,
    atk: &AttackConfig,
    cfg: &TrainConfig,
) -> core::result::Result<TrainOutcome, TrainError> {
    train_observed(model, dist, atk, cfg, |_, _| {})
}

/// [`train`], calling `observe` with each recorded row and the model it was
/// recorded from.
pub fn train_observed(
    mut model: MlpModel,
    dist: &ToyDist,
    atk: &AttackConfig,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&TrajectoryRecord, &MlpModel),
) -> core::result::Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    atk.validate()?;
    dist.validate()?;
    let recorder = Recorder::new(dist, atk, cfg)?;
    let n = model.param_count();
    let mut opt = match cfg.optimizer {
        OptimizerKind::Adam => Optimizer::adam(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam),
        OptimizerKind::SgdMomentum => Optimizer::sgd_momentum(n, cfg.lr, cfg.momentum),
    };

    let (fixed, samples, minibatch, mut rng) = match cfg.batch {
        BatchMode::FullQuadrature { points } if points == cfg.eval_points => {
            (None, Vec::new(), None, seeded(0))
        }
        BatchMode::FullQuadrature { points } => (
            Some(BallGrid::new(dist, dist.quadrature(points), atk.ball)),
            Vec::new(),
            None,
            seeded(0),
        ),
        BatchMode::Samples { n, seed, minibatch } => {
            let xs: Vec<f64> = dist.sample(n, seed).into_iter().map(|(x, _)| x).collect();
            let all: Vec<usize> = (0..xs.len()).collect();
            let grid = minibatch
                .is_none()
                .then(|| batch_grid(dist, atk, &xs, &all));
            (grid, xs, minibatch, seeded(derive_seed(seed, 1)))
        }
    };

    let mut records = Vec::new();
    for step in 0..=cfg.steps {
        let drawn;
        let grid = match (&fixed, minibatch) {
            (Some(g), _) => g,
            (None, Some(m)) => {
                let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..samples.len())).collect();
                drawn = batch_grid(dist, atk, &samples, &idx);
                &drawn
            }
            (None, None) => recorder.grid(),
        };
        let table = grid.model_table(&model);
        let (raw, grad) = loss_and_grad(
            &model,
            dist,
            grid,
            &table,
            cfg.spec,
            cfg.objective,
            atk,
            &cfg.trades,
        )?;
        if !raw.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite {
                step,
                partial: TrainOutcome { model, records },
            });
        }
        let (loss, scale) = clip_loss(raw, &cfg.clip);
        if step % cfg.record_every == 0 || step == cfg.steps {
            let shared = fixed.is_none() && minibatch.is_none();
            let row = if shared {
                recorder.record_table(&table, step, loss)?
            } else {
                recorder.record(&model, step, loss)?
            };
            observe(&row, &model);
            records.push(row);
        }
        if step == cfg.steps {
            break;
        }
        if scale != 0.0 {
            opt.step(model.params_mut(), &grad);
        }
    }
    Ok(TrainOutcome { model, records })
}

/// One trained configuration of a finite-sample comparison.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub config: TrainConfig,
    pub model: MlpModel,
    pub records: Vec<TrajectoryRecord>,
}

/// Several objectives trained from one initialization on one sample.
#[derive(Debug, Clone)]
pub struct FiniteSampleRun {
    pub samples: Vec<(f64, u8)>,
    pub runs: Vec<SampleRun>,
}

impl FiniteSampleRun {
    /// Rows `(x, eta(x), eta_hat_1(x), ...)` on `points` support nodes.
    pub fn curves(&self, dist: &ToyDist, points: usize) -> Vec<Vec<f64>> {
        dist.quadrature(points)
            .points
            .iter()
            .map(|&x| {
                let mut row = alloc::vec![x, dist.eta(x)];
                row.extend(self.runs.iter().map(|r| r.model.prob_one(x)));
                row
            })
            .collect()
    }
}

/// Draw `n` samples with `seed` and train every config on them from `init`.
/// Each config keeps its own minibatch setting if it already samples.
pub fn finite_sample_run(
    dist: &ToyDist,
    n: usize,
    seed: u64,
    init: &MlpModel,
    atk: &AttackConfig,
    cfgs: &[TrainConfig],
) -> core::result::Result<FiniteSampleRun, TrainError> {
    if n < 1 {
        return Err(Error::InvalidConfig("sample size must be at least 1".into()).into());
    }
    let mut runs = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let minibatch = match cfg.batch {
            BatchMode::Samples { minibatch, .. } => minibatch,
            BatchMode::FullQuadrature { .. } => None,
        };
        let config = TrainConfig {
            batch: BatchMode::Samples { n, seed, minibatch },
            ..cfg.clone()
        };
        let out = train(init.clone(), dist, atk, &config)?;
        runs.push(SampleRun {
            config,
            model: out.model,
            records: out.records,
        });
    }
    Ok(FiniteSampleRun {
        samples: dist.sample(n, seed),
        runs,
    })
}

/// `max_x |eta_hat(x) - eta(x)|` over `points` support nodes.
pub fn sup_gap<M: Classifier>(model: &M, dist: &ToyDist, points: usize) -> f64 {
    dist.quadrature(points)
        .points
        .iter()
        .map(|&x| (model.prob_one(x) - dist.eta(x)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Activation;

    fn init(seed: u64) -> MlpModel {
        MlpModel::two_hidden(32, Activation::Tanh, seed).unwrap()
    }

    fn short(objective: Objective, spec: MetricSpec, steps: usize) -> TrainConfig {
        TrainConfig {
            objective,
            spec,
            steps,
            eval_points: 41,
            batch: BatchMode::FullQuadrature { points: 41 },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        for bad in [
            TrainConfig {
                steps: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lr: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                record_every: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                objective: Objective::Trades,
                trades: TradesConfig { beta: 0.1 },
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(
                train(init(0), &d, &atk, &bad),
                Err(TrainError::Config(_))
            ));
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        let cfg = short(Objective::Madry, MetricSpec::L2, 15);
        let a = train(init(1), &d, &atk, &cfg).unwrap();
        let b = train(init(1), &d, &atk, &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.model, b.model);
        assert_eq!(a.records.len(), 16);
        assert_eq!(a.records.last().unwrap().step, 15);
    }

    #[test]
    fn record_cadence() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        let cfg = TrainConfig {
            record_every: 4,
            ..short(Objective::Score, MetricSpec::KL, 10)
        };
        let out = train(init(2), &d, &atk, &cfg).unwrap();
        let steps: Vec<usize> = out.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, [0, 4, 8, 10]);
    }

    #[test]
    fn records_obey_the_sandwich() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        for spec in MetricSpec::SWEEP {
            for objective in [Objective::Madry, Objective::Score, Objective::Trades] {
                let out = train(init(3), &d, &atk, &short(objective, spec, 5)).unwrap();
                for r in &out.records {
                    assert!(
                        r.thm1_lo_resid >= -1e-9 && r.thm1_hi_resid >= -1e-9,
                        "{spec} {objective:?}"
                    );
                    if spec.is_distance_metric() {
                        assert!(r.r_score >= (r.r_madry - r.c_const).abs() - 1e-9);
                        assert!(r.r_score <= r.r_madry + r.c_const + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn both_optimizers_descend_at_first() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        for (optimizer, lr) in [
            (OptimizerKind::Adam, 1e-3),
            (OptimizerKind::SgdMomentum, 1e-2),
        ] {
            let cfg = TrainConfig {
                optimizer,
                lr,
                ..short(Objective::Standard, MetricSpec::KL, 10)
            };
            let out = train(init(4), &d, &atk, &cfg).unwrap();
            for w in out.records.windows(2) {
                assert!(
                    w[1].train_loss < w[0].train_loss,
                    "{optimizer:?} {:?}",
                    out.records.iter().map(|r| r.train_loss).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn clipping_holds_the_loss_at_threshold() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        let cfg = TrainConfig {
            clip: ClipConfig {
                enabled: true,
                threshold: 0.3,
            },
            ..short(Objective::Madry, MetricSpec::L2, 60)
        };
        let out = train(init(5), &d, &atk, &cfg).unwrap();
        let first = out.records.iter().position(|r| r.train_loss == 0.3);
        assert!(first.is_some(), "clip never activated");
        assert!(out.records.iter().all(|r| r.train_loss >= 0.3 - 1e-12));
        // once clipped with no update, the parameters stay put
        let i = first.unwrap();
        assert!(out.records[i..]
            .iter()
            .all(|r| r.r_madry == out.records[i].r_madry));
    }

    #[test]
    fn non_finite_loss_aborts_with_partial_records() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        let cfg = short(Objective::Standard, MetricSpec::SE, 20);
        let mut m = init(6);
        m.params_mut()[0] = f64::NAN;
        match train(m, &d, &atk, &cfg) {
            Err(TrainError::NonFinite { step, partial }) => {
                assert_eq!(step, 0);
                assert!(partial.records.is_empty());
            }
            other => panic!("expected abort, got {:?}", other.map(|o| o.records.len())),
        }
    }

    #[test]
    fn finite_sample_runs_share_data_and_init() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        let cfgs: Vec<TrainConfig> = [Objective::Standard, Objective::Madry, Objective::Score]
            .into_iter()
            .map(|o| short(o, MetricSpec::KL, 20))
            .collect();
        let a = finite_sample_run(&d, 6, 7, &init(0), &atk, &cfgs).unwrap();
        let b = finite_sample_run(&d, 6, 7, &init(0), &atk, &cfgs).unwrap();
        assert_eq!(a.samples.len(), 6);
        assert_eq!(a.runs.len(), 3);
        assert_eq!(a.curves(&d, 81), b.curves(&d, 81));
        assert_eq!(a.curves(&d, 81)[0].len(), 5);
    }
}
