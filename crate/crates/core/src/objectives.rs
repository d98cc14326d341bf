//! Standard, Madry, self-consistent (SCORE) and TRADES risks over any
//! [`MetricSpec`], their inner maximizations, loss clipping, the minimal flip
//! radius and the 0-1 criteria.
//!
//! Risks are weighted averages over an [`EvalSet`]. With
//! [`AttackMode::GridExact`] the inner max runs over the shared candidate set
//! `S(x)` of a [`PerturbBall`], so every risk in one comparison sees the same
//! points. Ties go to `x` itself, then to the lowest candidate index.

use alloc::vec;
use alloc::vec::Vec;

use libm::log;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{Classifier, MlpModel};
use crate::simplex::MetricSpec;
use crate::toydist::{label_of, EvalSet, PerturbBall, ToyDist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    #[default]
    GridExact,
    Pgd,
}

/// Inner-maximization solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// PGD iterations.
    pub steps: usize,
    /// PGD step in `x` units.
    pub step_size: f64,
    pub ball: PerturbBall,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let ball = PerturbBall::default();
        Self {
            mode: AttackMode::GridExact,
            steps: 10,
            step_size: ball.epsilon / 4.0,
            ball,
        }
    }
}

impl AttackConfig {
    pub fn grid(ball: PerturbBall) -> Self {
        Self {
            ball,
            step_size: ball.epsilon / 4.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ball.validate()?;
        if self.mode == AttackMode::Pgd && !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(
                "attack.step_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which conditional the model output at `x'` is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// `D(p_d(.|x) || p_theta(.|x'))`
    Madry,
    /// `D(p_d(.|x') || p_theta(.|x'))`
    Score,
    /// `D(p_theta(.|x) || p_theta(.|x'))`
    Trades,
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Standard,
    Madry,
    Score,
    Trades,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Madry => "madry",
            Self::Score => "score",
            Self::Trades => "trades",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradesConfig {
    pub beta: f64,
}

impl Default for TradesConfig {
    fn default() -> Self {
        Self { beta: 6.0 }
    }
}

impl TradesConfig {
    pub fn new(beta: f64) -> Result<Self> {
        let c = Self { beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(
                "trades.beta must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Lower clip on the batch loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub enabled: bool,
    pub threshold: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: 0.4,
        }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidConfig(
                "clip.threshold must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// `(threshold, 0)` when enabled and `value < threshold`, else `(value, 1)`.
pub fn clip_loss(value: f64, cfg: &ClipConfig) -> (f64, f64) {
    if cfg.enabled && value < cfg.threshold {
        (cfg.threshold, 0.0)
    } else {
        (value, 1.0)
    }
}

fn bin(eta: f64) -> [f64; 2] {
    [1.0 - eta, eta]
}

/// Inner objective at candidate `xp` for centre `x`.
fn inner_value<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    x: f64,
    xp: f64,
    spec: MetricSpec,
    anchor: Anchor,
) -> Result<f64> {
    let q = bin(model.prob_one(xp));
    let p = match anchor {
        Anchor::Madry => bin(dist.eta(x)),
        Anchor::Score => bin(dist.eta(xp)),
        Anchor::Trades => bin(model.prob_one(x)),
    };
    spec.eval_raw(&p, &q)
}

/// `d/dxp` of [`inner_value`].
fn inner_slope<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    x: f64,
    xp: f64,
    spec: MetricSpec,
    anchor: Anchor,
) -> Result<f64> {
    let q = bin(model.prob_one(xp));
    let p = match anchor {
        Anchor::Madry => bin(dist.eta(x)),
        Anchor::Score => bin(dist.eta(xp)),
        Anchor::Trades => bin(model.prob_one(x)),
    };
    let mut g = [0.0; 2];
    spec.grad_q_raw(&p, &q, &mut g)?;
    let mut slope = (g[1] - g[0]) * model.prob_one_dx(xp);
    if anchor == Anchor::Score {
        spec.grad_p_raw(&p, &q, &mut g)?;
        slope += (g[1] - g[0]) * dist.eta_dx(xp);
    }
    Ok(slope)
}

/// Maximize the anchored divergence over the ball around `x`.
/// Returns `(x_adv, value)`.
pub fn inner_max<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    x: f64,
    spec: MetricSpec,
    anchor: Anchor,
    atk: &AttackConfig,
) -> Result<(f64, f64)> {
    let mut best = (x, inner_value(model, dist, x, x, spec, anchor)?);
    match atk.mode {
        AttackMode::GridExact => {
            let h = atk.ball.half();
            for (k, xp) in atk.ball.candidates(x).enumerate() {
                if k == h {
                    continue;
                }
                let v = inner_value(model, dist, x, xp, spec, anchor)?;
                if v > best.1 {
                    best = (xp, v);
                }
            }
        }
        AttackMode::Pgd => {
            let eps = atk.ball.epsilon;
            let mut xp = x;
            for _ in 0..atk.steps {
                let g = inner_slope(model, dist, x, xp, spec, anchor)?;
                if g == 0.0 || !g.is_finite() {
                    break;
                }
                xp = (xp + atk.step_size * g.signum()).clamp(x - eps, x + eps);
                let v = inner_value(model, dist, x, xp, spec, anchor)?;
                if v > best.1 {
                    best = (xp, v);
                }
            }
        }
    }
    Ok(best)
}

/// Data and model conditionals tabulated on `S(x)` for every point of an
/// evaluation set. Row `i`, column `k` holds candidate `x_i + (k - h) * eps / h`.
#[derive(Debug, Clone)]
pub struct BallGrid {
    pub set: EvalSet,
    pub ball: PerturbBall,
    candidates: Vec<f64>,
    data_eta: Vec<f64>,
}

/// Model outputs on a [`BallGrid`].
#[derive(Debug, Clone)]
pub struct ModelTable {
    eta_hat: Vec<f64>,
}

impl ModelTable {
    pub fn eta_hat(&self) -> &[f64] {
        &self.eta_hat
    }
}

/// A risk with its per-point maximizers.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEval {
    pub value: f64,
    pub per_point: Vec<f64>,
    /// Column index of the maximizer in each row.
    pub argmax: Vec<usize>,
}

impl BallGrid {
    pub fn new(dist: &ToyDist, set: EvalSet, ball: PerturbBall) -> Self {
        let mut candidates = Vec::with_capacity(set.len() * ball.grid_points);
        for &x in &set.points {
            candidates.extend(ball.candidates(x));
        }
        let data_eta = candidates.iter().map(|&xp| dist.eta(xp)).collect();
        Self {
            set,
            ball,
            candidates,
            data_eta,
        }
    }

    pub fn width(&self) -> usize {
        self.ball.grid_points
    }

    pub fn centre(&self) -> usize {
        self.ball.half()
    }

    pub fn candidate(&self, i: usize, k: usize) -> f64 {
        self.candidates[i * self.width() + k]
    }

    pub fn data_eta(&self, i: usize, k: usize) -> f64 {
        self.data_eta[i * self.width() + k]
    }

    pub fn model_table<M: Classifier>(&self, model: &M) -> ModelTable {
        ModelTable {
            eta_hat: self
                .candidates
                .iter()
                .map(|&xp| model.prob_one(xp))
                .collect(),
        }
    }

    fn reduce(
        &self,
        mut cell: impl FnMut(usize, usize) -> Result<f64>,
        centre_only: bool,
    ) -> Result<RiskEval> {
        let n = self.set.len();
        let c = self.centre();
        let mut per_point = Vec::with_capacity(n);
        let mut argmax = Vec::with_capacity(n);
        let mut value = 0.0;
        for i in 0..n {
            let mut best = (c, cell(i, c)?);
            if !centre_only {
                for k in 0..self.width() {
                    if k == c {
                        continue;
                    }
                    let v = cell(i, k)?;
                    if v > best.1 {
                        best = (k, v);
                    }
                }
            }
            value += self.set.weights[i] * best.1;
            per_point.push(best.1);
            argmax.push(best.0);
        }
        Ok(RiskEval {
            value,
            per_point,
            argmax,
        })
    }

    fn at(&self, t: &ModelTable, i: usize, k: usize) -> f64 {
        t.eta_hat[i * self.width() + k]
    }

    /// `E D(p_d(.|x) || p_theta(.|x))`.
    pub fn standard(&self, spec: MetricSpec, t: &ModelTable) -> Result<RiskEval> {
        let c = self.centre();
        self.reduce(
            |i, _| spec.eval_raw(&bin(self.data_eta(i, c)), &bin(self.at(t, i, c))),
            true,
        )
    }

    /// `E max_{x'} D(p_d(.|x) || p_theta(.|x'))`.
    pub fn madry(&self, spec: MetricSpec, t: &ModelTable) -> Result<RiskEval> {
        let c = self.centre();
        self.reduce(
            |i, k| spec.eval_raw(&bin(self.data_eta(i, c)), &bin(self.at(t, i, k))),
            false,
        )
    }

    /// `E max_{x'} D(p_d(.|x') || p_theta(.|x'))`.
    pub fn score(&self, spec: MetricSpec, t: &ModelTable) -> Result<RiskEval> {
        self.reduce(
            |i, k| spec.eval_raw(&bin(self.data_eta(i, k)), &bin(self.at(t, i, k))),
            false,
        )
    }

    /// `E max_{x'} D(p_theta(.|x) || p_theta(.|x'))`.
    pub fn trades_reg(&self, spec: MetricSpec, t: &ModelTable) -> Result<RiskEval> {
        let c = self.centre();
        self.reduce(
            |i, k| spec.eval_raw(&bin(self.at(t, i, c)), &bin(self.at(t, i, k))),
            false,
        )
    }

    /// `E D(p_d || p_theta) + beta * E max D(p_theta(.|x) || p_theta(.|x'))`.
    pub fn trades(&self, spec: MetricSpec, t: &ModelTable, beta: f64) -> Result<f64> {
        Ok(self.standard(spec, t)?.value + beta * self.trades_reg(spec, t)?.value)
    }

    /// `E max_{x'} D(p_d(.|x) || p_d(.|x'))` on this grid.
    pub fn smoothness(&self, spec: MetricSpec) -> Result<f64> {
        let c = self.centre();
        Ok(self
            .reduce(
                |i, k| spec.eval_raw(&bin(self.data_eta(i, c)), &bin(self.data_eta(i, k))),
                false,
            )?
            .value)
    }

    /// Standard, Madry and self-consistent 0-1 errors.
    pub fn zero_one(&self, t: &ModelTable) -> ZeroOne {
        let c = self.centre();
        let (mut std01, mut madry01, mut score01) = (0.0, 0.0, 0.0);
        for i in 0..self.set.len() {
            let w = self.set.weights[i];
            let y_d = label_of(self.data_eta(i, c));
            if label_of(self.at(t, i, c)) != y_d {
                std01 += w;
            }
            let row = 0..self.width();
            if row.clone().any(|k| label_of(self.at(t, i, k)) != y_d) {
                madry01 += w;
            }
            if row
                .into_iter()
                .any(|k| label_of(self.at(t, i, k)) != label_of(self.data_eta(i, k)))
            {
                score01 += w;
            }
        }
        ZeroOne {
            std01,
            madry01,
            score01,
        }
    }
}

/// Weighted 0-1 error rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroOne {
    pub std01: f64,
    pub madry01: f64,
    pub score01: f64,
}

fn grid_or_attack<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    xs: &EvalSet,
    spec: MetricSpec,
    anchor: Anchor,
    atk: &AttackConfig,
) -> Result<f64> {
    match atk.mode {
        AttackMode::GridExact => {
            let grid = BallGrid::new(dist, xs.clone(), atk.ball);
            let t = grid.model_table(model);
            Ok(match anchor {
                Anchor::Madry => grid.madry(spec, &t)?.value,
                Anchor::Score => grid.score(spec, &t)?.value,
                Anchor::Trades => grid.trades_reg(spec, &t)?.value,
            })
        }
        AttackMode::Pgd => {
            let mut total = 0.0;
            for (x, w) in xs.iter() {
                total += w * inner_max(model, dist, x, spec, anchor, atk)?.1;
            }
            Ok(total)
        }
    }
}

/// `E D(p_d(.|x) || p_theta(.|x))`.
pub fn loss_standard<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    xs: &EvalSet,
    spec: MetricSpec,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, w) in xs.iter() {
        total += w * spec.eval_raw(&bin(dist.eta(x)), &bin(model.prob_one(x)))?;
    }
    Ok(total)
}

/// Cross-entropy `E[-sum_y p_d ln p_theta]` and data entropy `E[-sum_y p_d ln p_d]`;
/// their difference is the KL standard loss.
pub fn cross_entropy_split<M: Classifier>(model: &M, dist: &ToyDist, xs: &EvalSet) -> (f64, f64) {
    let (mut ce, mut h) = (0.0, 0.0);
    for (x, w) in xs.iter() {
        let p = bin(dist.eta(x));
        let q = bin(model.prob_one(x));
        for y in 0..2 {
            if p[y] > 0.0 {
                ce -= w * p[y] * log(q[y]);
                h -= w * p[y] * log(p[y]);
            }
        }
    }
    (ce, h)
}

/// `E max_{x'} D(p_d(.|x) || p_theta(.|x'))`.
pub fn loss_madry<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    xs: &EvalSet,
    spec: MetricSpec,
    atk: &AttackConfig,
) -> Result<f64> {
    grid_or_attack(model, dist, xs, spec, Anchor::Madry, atk)
}

/// `E max_{x'} D(p_d(.|x') || p_theta(.|x'))`.
pub fn loss_score<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    xs: &EvalSet,
    spec: MetricSpec,
    atk: &AttackConfig,
) -> Result<f64> {
    grid_or_attack(model, dist, xs, spec, Anchor::Score, atk)
}

/// `E D(p_d || p_theta) + beta * E max_{x'} D(p_theta(.|x) || p_theta(.|x'))`.
pub fn loss_trades<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    xs: &EvalSet,
    spec: MetricSpec,
    atk: &AttackConfig,
    cfg: &TradesConfig,
) -> Result<f64> {
    cfg.validate()?;
    Ok(loss_standard(model, dist, xs, spec)?
        + cfg.beta * grid_or_attack(model, dist, xs, spec, Anchor::Trades, atk)?)
}

/// 0-1 errors over the shared candidate sets.
pub fn zero_one_errors<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    xs: &EvalSet,
    ball: &PerturbBall,
) -> ZeroOne {
    let grid = BallGrid::new(dist, xs.clone(), *ball);
    grid.zero_one(&grid.model_table(model))
}

/// Smallest `|delta|` in `[r_lo, r_hi]` that changes the predicted label of
/// `x`, to absolute tolerance `tol`; `f64::INFINITY` when the coarse scan
/// finds no flip.
pub fn min_flip_radius<M: Classifier>(model: &M, x: f64, search: (f64, f64), tol: f64) -> f64 {
    const COARSE: usize = 512;
    let (r_lo, r_hi) = search;
    let base = model.label(x);
    let flips_at = |r: f64, side: f64| model.label(x + side * r) != base;
    if flips_at(r_lo, -1.0) || flips_at(r_lo, 1.0) {
        return r_lo;
    }
    let step = (r_hi - r_lo) / COARSE as f64;
    let mut prev = r_lo;
    for j in 1..=COARSE {
        let r = if j == COARSE {
            r_hi
        } else {
            r_lo + j as f64 * step
        };
        let mut best = f64::INFINITY;
        for side in [-1.0, 1.0] {
            if flips_at(r, side) {
                let (mut lo, mut hi) = (prev, r);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if flips_at(mid, side) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                best = best.min(hi);
            }
        }
        if best.is_finite() {
            return best;
        }
        prev = r;
    }
    f64::INFINITY
}

/// `d/dx KL(p_d(.|x) || p_theta(.|x))` via
/// `sum_y p_d(y|x) [ -d ln p_theta(y|x) + d ln p_d(y|x) (ln p_d(y|x) - ln p_theta(y|x)) ]`.
pub fn direct_score_input_grad<M: Classifier>(model: &M, dist: &ToyDist, x: f64) -> Result<f64> {
    let e = dist.eta(x);
    let m = model.prob_one(x);
    let dm = model.prob_one_dx(x);
    let pd = [1.0 - e, e];
    let pt = [1.0 - m, m];
    let dlog_model = [-dm / pt[0], dm / pt[1]];
    let mut total = 0.0;
    for y in 0..2u8 {
        let yi = y as usize;
        let dlog_data = dist.data_log_grad(x, y)?;
        total += pd[yi] * (-dlog_model[yi] + dlog_data * (log(pd[yi]) - log(pt[yi])));
    }
    Ok(total)
}

/// Positions of the inner maximizers for every row of `grid`, by the
/// configured solver.
fn maximizers(
    model: &MlpModel,
    dist: &ToyDist,
    grid: &BallGrid,
    table: &ModelTable,
    spec: MetricSpec,
    anchor: Anchor,
    atk: &AttackConfig,
) -> Result<Vec<f64>> {
    match atk.mode {
        AttackMode::GridExact => {
            let risk = match anchor {
                Anchor::Madry => grid.madry(spec, table)?,
                Anchor::Score => grid.score(spec, table)?,
                Anchor::Trades => grid.trades_reg(spec, table)?,
            };
            Ok(risk
                .argmax
                .iter()
                .enumerate()
                .map(|(i, &k)| grid.candidate(i, k))
                .collect())
        }
        AttackMode::Pgd => grid
            .set
            .points
            .iter()
            .map(|&x| inner_max(model, dist, x, spec, anchor, atk).map(|r| r.0))
            .collect(),
    }
}

/// Loss value and parameter gradient of `objective` over `grid.set`.
///
/// Inner maximizers are held fixed while differentiating.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    model: &MlpModel,
    dist: &ToyDist,
    grid: &BallGrid,
    table: &ModelTable,
    spec: MetricSpec,
    objective: Objective,
    atk: &AttackConfig,
    trades: &TradesConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    let mut g = [0.0; 2];
    // Accumulate w * D(p || q(x')) and its gradient through q(x').
    let mut through_q = |x: f64, p: [f64; 2], w: f64, grad: &mut [f64]| -> Result<f64> {
        let (m, slope) = model.prob_and_slope(x);
        let q = bin(m);
        let v = spec.eval_raw(&p, &q)?;
        if slope != 0.0 {
            spec.grad_q_raw(&p, &q, &mut g)?;
            model.accumulate_logit_grad(x, w * (g[1] - g[0]) * slope, grad);
        }
        Ok(w * v)
    };
    let points = &grid.set.points;
    let weights = &grid.set.weights;
    match objective {
        Objective::Standard => {
            for (&x, &w) in points.iter().zip(weights) {
                loss += through_q(x, bin(dist.eta(x)), w, &mut grad)?;
            }
        }
        Objective::Madry | Objective::Score => {
            let anchor = if objective == Objective::Madry {
                Anchor::Madry
            } else {
                Anchor::Score
            };
            let adv = maximizers(model, dist, grid, table, spec, anchor, atk)?;
            for ((&x, &w), &xp) in points.iter().zip(weights).zip(&adv) {
                let p = if anchor == Anchor::Madry {
                    dist.eta(x)
                } else {
                    dist.eta(xp)
                };
                loss += through_q(xp, bin(p), w, &mut grad)?;
            }
        }
        Objective::Trades => {
            trades.validate()?;
            let adv = maximizers(model, dist, grid, table, spec, Anchor::Trades, atk)?;
            let mut gp = [0.0; 2];
            for ((&x, &w), &xp) in points.iter().zip(weights).zip(&adv) {
                loss += through_q(x, bin(dist.eta(x)), w, &mut grad)?;
                // beta * D(q(x) || q(x')), differentiated in both arguments
                let (m0, s0) = model.prob_and_slope(x);
                let (m1, s1) = model.prob_and_slope(xp);
                let (p, q) = (bin(m0), bin(m1));
                let bw = trades.beta * w;
                loss += bw * spec.eval_raw(&p, &q)?;
                if s0 != 0.0 {
                    spec.grad_p_raw(&p, &q, &mut gp)?;
                    model.accumulate_logit_grad(x, bw * (gp[1] - gp[0]) * s0, &mut grad);
                }
                if s1 != 0.0 {
                    spec.grad_q_raw(&p, &q, &mut gp)?;
                    model.accumulate_logit_grad(xp, bw * (gp[1] - gp[0]) * s1, &mut grad);
                }
            }
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Activation, ConstantModel, LogisticModel, OracleModel};
    use crate::simplex::Phi;
    use proptest::prelude::*;

    const SPECS: [MetricSpec; 8] = MetricSpec::SWEEP;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    fn net(seed: u64) -> MlpModel {
        MlpModel::two_hidden(8, Activation::Tanh, seed).unwrap()
    }

    #[test]
    fn constant_everything_has_zero_inner_max() {
        let d = ToyDist::constant([-4.0, 4.0], 0.3).unwrap();
        let m = ConstantModel(0.3);
        for mode in [AttackMode::GridExact, AttackMode::Pgd] {
            let atk = AttackConfig {
                mode,
                ..AttackConfig::default()
            };
            for anchor in [Anchor::Madry, Anchor::Score, Anchor::Trades] {
                for spec in SPECS {
                    assert_eq!(
                        inner_max(&m, &d, 0.7, spec, anchor, &atk).unwrap(),
                        (0.7, 0.0)
                    );
                }
            }
        }
    }

    #[test]
    fn grid_agrees_with_dense_brute_force() {
        let d = ToyDist::default();
        let atk = AttackConfig::default();
        let spacing = atk.ball.spacing();
        for seed in 0..20 {
            let m = net(seed);
            let x = -3.0 + 0.3 * seed as f64;
            for anchor in [Anchor::Madry, Anchor::Score] {
                let (_, coarse) = inner_max(&m, &d, x, MetricSpec::L2, anchor, &atk).unwrap();
                let dense: Vec<(f64, f64)> = (0..=400)
                    .map(|j| {
                        let xp = x - 1.0 + j as f64 * 0.005;
                        (
                            xp,
                            inner_value(&m, &d, x, xp, MetricSpec::L2, anchor).unwrap(),
                        )
                    })
                    .collect();
                let top = dense.iter().map(|v| v.1).fold(f64::MIN, f64::max);
                let lip = dense
                    .windows(2)
                    .map(|w| ((w[1].1 - w[0].1) / 0.005).abs())
                    .fold(0.0, f64::max);
                assert!(top >= coarse - 1e-15);
                assert!(top - coarse <= lip * spacing / 2.0 + 1e-12, "seed {seed}");
            }
        }
    }

    #[test]
    fn pgd_never_beats_grid() {
        let d = ToyDist::default();
        let grid = AttackConfig::default();
        let pgd = AttackConfig {
            mode: AttackMode::Pgd,
            ..grid
        };
        for seed in 0..100u64 {
            let m = net(seed);
            let x = -3.5 + 0.07 * seed as f64;
            for anchor in [Anchor::Madry, Anchor::Score, Anchor::Trades] {
                let (xa, v_pgd) = inner_max(&m, &d, x, MetricSpec::KL, anchor, &pgd).unwrap();
                let (_, v_grid) = inner_max(&m, &d, x, MetricSpec::KL, anchor, &grid).unwrap();
                assert!(v_pgd <= v_grid + 1e-6, "seed {seed}: {v_pgd} > {v_grid}");
                assert!((xa - x).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn orderings_on_random_models() {
        let d = ToyDist::default();
        let xs = d.quadrature(41);
        let atk = AttackConfig::default();
        for seed in 0..25 {
            let m = net(seed);
            for spec in SPECS {
                let std = loss_standard(&m, &d, &xs, spec).unwrap();
                let madry = loss_madry(&m, &d, &xs, spec, &atk).unwrap();
                let score = loss_score(&m, &d, &xs, spec, &atk).unwrap();
                assert!(std <= madry && std <= score, "{spec}");
                let mut prev = f64::MIN;
                for beta in [1.0, 2.0, 4.0, 6.0] {
                    let t = loss_trades(&m, &d, &xs, spec, &atk, &TradesConfig { beta }).unwrap();
                    assert!(t >= prev);
                    prev = t;
                }
            }
            let madry = loss_madry(&m, &d, &xs, MetricSpec::L1, &atk).unwrap();
            let t1 = loss_trades(
                &m,
                &d,
                &xs,
                MetricSpec::L1,
                &atk,
                &TradesConfig { beta: 1.0 },
            )
            .unwrap();
            let t6 = loss_trades(
                &m,
                &d,
                &xs,
                MetricSpec::L1,
                &atk,
                &TradesConfig { beta: 6.0 },
            )
            .unwrap();
            assert!(t1 >= madry - 1e-12 && t6 <= 13.0 * madry + 1e-12);
        }
    }

    #[test]
    fn oracle_is_self_consistent() {
        let d = ToyDist::default();
        let xs = d.quadrature(161);
        let atk = AttackConfig::default();
        let oracle = OracleModel { dist: &d };
        for spec in SPECS {
            assert_eq!(loss_score(&oracle, &d, &xs, spec, &atk).unwrap(), 0.0);
            assert_eq!(loss_standard(&oracle, &d, &xs, spec).unwrap(), 0.0);
        }
        let madry = loss_madry(&oracle, &d, &xs, MetricSpec::KL, &atk).unwrap();
        let c = d.compute_c(&atk.ball, MetricSpec::KL, 161).unwrap();
        assert_eq!(madry, c.value);
    }

    #[test]
    fn constant_eta_makes_score_equal_madry() {
        let d = ToyDist::constant([-4.0, 4.0], 0.35).unwrap();
        let xs = d.quadrature(41);
        let atk = AttackConfig::default();
        for seed in 0..5 {
            let m = net(seed);
            for spec in SPECS {
                assert_eq!(
                    loss_score(&m, &d, &xs, spec, &atk).unwrap(),
                    loss_madry(&m, &d, &xs, spec, &atk).unwrap()
                );
            }
        }
        let oracle = ConstantModel(0.35);
        assert_eq!(
            loss_madry(&oracle, &d, &xs, MetricSpec::KL, &atk).unwrap(),
            0.0
        );
        let t = loss_trades(
            &oracle,
            &d,
            &xs,
            MetricSpec::KL,
            &atk,
            &TradesConfig::default(),
        );
        assert_eq!(t.unwrap(), 0.0);
    }

    #[test]
    fn kl_standard_hand_value_and_split() {
        let d = ToyDist::constant([-1.0, 1.0], 0.0).unwrap();
        let xs = EvalSet::uniform(vec![0.2]);
        let m = ConstantModel(0.3);
        let kl = loss_standard(&m, &d, &xs, MetricSpec::KL).unwrap();
        assert!((kl + log(0.7)).abs() < 1e-15);
        let d = ToyDist::default();
        let xs = d.quadrature(41);
        let n = net(3);
        let (ce, h) = cross_entropy_split(&n, &d, &xs);
        let kl = loss_standard(&n, &d, &xs, MetricSpec::KL).unwrap();
        assert!((ce - h - kl).abs() < 1e-12);
    }

    #[test]
    fn trades_rejects_small_beta() {
        let d = ToyDist::default();
        let xs = d.quadrature(11);
        let r = loss_trades(
            &net(0),
            &d,
            &xs,
            MetricSpec::L1,
            &AttackConfig::default(),
            &TradesConfig { beta: 0.5 },
        );
        assert!(r.is_err());
        assert!(TradesConfig::new(0.5).is_err());
    }

    #[test]
    fn composed_metric_losses_match_simplex() {
        let d = ToyDist::default();
        let xs = d.quadrature(21);
        let m = net(9);
        let direct = loss_standard(&m, &d, &xs, MetricSpec::SQ_L1).unwrap();
        let mut manual = 0.0;
        for (x, w) in xs.iter() {
            let l1 = MetricSpec::L1.eval(&d.cond_prob(x), &m.forward(x)).unwrap();
            manual += w * l1 * l1;
        }
        assert!(rel(direct, manual) < 1e-12);
        assert_eq!(MetricSpec::L1.with_phi(Phi::Square), MetricSpec::SQ_L1);
    }

    #[test]
    fn clip_semantics() {
        let on = ClipConfig {
            enabled: true,
            threshold: 0.4,
        };
        assert_eq!(clip_loss(0.5, &on), (0.5, 1.0));
        assert_eq!(clip_loss(0.3, &on), (0.4, 0.0));
        let off = ClipConfig {
            enabled: false,
            threshold: 0.4,
        };
        assert_eq!(clip_loss(0.3, &off), (0.3, 1.0));
        assert_eq!(clip_loss(-2.0, &off), (-2.0, 1.0));
    }

    #[test]
    fn flip_radius_cases() {
        let m = LogisticModel {
            slope: 1.0,
            offset: 0.0,
        };
        let r = min_flip_radius(&m, 1.0, (0.0, 4.0), 1e-9);
        assert!((r - 1.0).abs() <= 1e-9);
        let coarse = min_flip_radius(&m, 1.7, (0.0, 4.0), 1e-3);
        let fine = min_flip_radius(&m, 1.7, (0.0, 4.0), 1e-6);
        assert!((coarse - fine).abs() <= 1e-3);
        assert_eq!(
            min_flip_radius(&ConstantModel(0.9), 0.0, (0.0, 4.0), 1e-6),
            f64::INFINITY
        );
        assert_eq!(min_flip_radius(&m, -0.5, (0.0, 0.1), 1e-6), f64::INFINITY);
    }

    #[test]
    fn zero_one_for_the_oracle() {
        let d = ToyDist::default();
        let ball = PerturbBall::default();
        let xs = d.quadrature(161);
        let oracle = OracleModel { dist: &d };
        let z = zero_one_errors(&oracle, &d, &xs, &ball);
        assert_eq!(z.score01, 0.0);
        assert_eq!(z.std01, 0.0);
        let mut crossing = 0.0;
        for (x, w) in xs.iter() {
            if ball
                .candidates(x)
                .any(|xp| d.hard_label(xp) != d.hard_label(x))
            {
                crossing += w;
            }
        }
        assert_eq!(z.madry01, crossing);
    }

    #[test]
    fn zero_one_without_boundary_crossings() {
        let d = ToyDist::default();
        let ball = PerturbBall::default();
        let far: Vec<f64> = d
            .quadrature(161)
            .points
            .into_iter()
            .filter(|&x| {
                ball.candidates(x)
                    .all(|xp| d.hard_label(xp) == d.hard_label(x))
            })
            .collect();
        let xs = EvalSet::uniform(far);
        for seed in 0..20 {
            let z = zero_one_errors(&net(seed), &d, &xs, &ball);
            assert_eq!(z.madry01, z.score01);
            assert!(z.std01 <= z.madry01);
        }
    }

    #[test]
    fn direct_input_grad_degenerate_cases() {
        let d = ToyDist::default();
        let oracle = OracleModel { dist: &d };
        for x in [-3.0, -1.0, 0.5, 2.0] {
            assert!(direct_score_input_grad(&oracle, &d, x).unwrap().abs() <= 1e-8);
        }
        let c = ToyDist::constant([-4.0, 4.0], 0.6).unwrap();
        assert_eq!(
            direct_score_input_grad(&ConstantModel(0.2), &c, 0.0).unwrap(),
            0.0
        );
        let z = ToyDist::constant([-4.0, 4.0], 0.0).unwrap();
        assert!(direct_score_input_grad(&ConstantModel(0.2), &z, 0.0).is_err());
    }

    fn fd_loss_grad(objective: Objective, spec: MetricSpec, seed: u64) {
        let d = ToyDist::default();
        let grid = BallGrid::new(&d, d.quadrature(9), AttackConfig::default().ball);
        let atk = AttackConfig::default();
        let trades = TradesConfig { beta: 2.0 };
        let m = net(seed);
        let table = grid.model_table(&m);
        let (loss, grad) =
            loss_and_grad(&m, &d, &grid, &table, spec, objective, &atk, &trades).unwrap();
        let expect = match objective {
            Objective::Standard => grid.standard(spec, &table).unwrap().value,
            Objective::Madry => grid.madry(spec, &table).unwrap().value,
            Objective::Score => grid.score(spec, &table).unwrap().value,
            Objective::Trades => grid.trades(spec, &table, 2.0).unwrap(),
        };
        assert!(rel(loss, expect) < 1e-12);
        // finite differences with the maximizers frozen
        let adv: Vec<f64> = match objective {
            Objective::Standard => grid.set.points.clone(),
            Objective::Madry | Objective::Score | Objective::Trades => {
                let anchor = match objective {
                    Objective::Madry => Anchor::Madry,
                    Objective::Score => Anchor::Score,
                    _ => Anchor::Trades,
                };
                maximizers(&m, &d, &grid, &table, spec, anchor, &atk).unwrap()
            }
        };
        let frozen = |m: &MlpModel| -> f64 {
            let mut total = 0.0;
            for ((x, w), xp) in grid.set.iter().zip(&adv) {
                let v = match objective {
                    Objective::Standard | Objective::Madry => spec
                        .eval_raw(&bin(d.eta(x)), &bin(m.prob_one(*xp)))
                        .unwrap(),
                    Objective::Score => spec
                        .eval_raw(&bin(d.eta(*xp)), &bin(m.prob_one(*xp)))
                        .unwrap(),
                    Objective::Trades => {
                        spec.eval_raw(&bin(d.eta(x)), &bin(m.prob_one(x))).unwrap()
                            + 2.0
                                * spec
                                    .eval_raw(&bin(m.prob_one(x)), &bin(m.prob_one(*xp)))
                                    .unwrap()
                    }
                };
                total += w * v;
            }
            total
        };
        let h = 1e-5;
        for i in (0..m.param_count()).step_by(7) {
            let mut a = m.clone();
            a.params_mut()[i] += h;
            let mut b = m.clone();
            b.params_mut()[i] -= h;
            let fd = (frozen(&a) - frozen(&b)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-5 * fd.abs().max(grad[i].abs()).max(1e-3),
                "{objective:?} {spec} param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn training_gradients_match_finite_differences() {
        for objective in [
            Objective::Standard,
            Objective::Madry,
            Objective::Score,
            Objective::Trades,
        ] {
            for spec in [MetricSpec::KL, MetricSpec::SE, MetricSpec::JS_DIV] {
                fd_loss_grad(objective, spec, 4);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn direct_input_grad_matches_finite_differences(seed in 0u64..10_000, x in -3.9f64..3.9) {
            let d = ToyDist::default();
            let m = net(seed);
            let kl = |x: f64| MetricSpec::KL.eval(&d.cond_prob(x), &m.forward(x)).unwrap();
            let h = 1e-5;
            let fd = (kl(x + h) - kl(x - h)) / (2.0 * h);
            let g = direct_score_input_grad(&m, &d, x).unwrap();
            prop_assert!((fd - g).abs() <= 1e-5 * fd.abs().max(g.abs()).max(1e-4), "{} vs {}", fd, g);
        }
    }
}
