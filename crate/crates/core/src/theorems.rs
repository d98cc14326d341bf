//! Mechanical checks of the bounds and identities relating the standard,
//! Madry, TRADES and self-consistent risks.
//!
//! The sandwich checks evaluate every risk on one [`BallGrid`], so each
//! candidate set `S(x)` is shared and the inequalities hold exactly up to
//! rounding. The smoothing checks are Monte Carlo estimates over a Gaussian
//! pair with common random numbers and antithetic draws.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::{log, sqrt};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{Activation, BlendModel, Classifier, MlpModel};
use crate::objectives::{BallGrid, ModelTable};
use crate::rng::{derive_seed, seeded};
use crate::simplex::{MetricSpec, Phi};
use crate::toydist::{label_of, sigmoid, EvalSet, Label, PerturbBall, ToyDist};

/// Tolerance for the checks that hold exactly on shared candidate sets.
pub const EXACT_TOL: f64 = 1e-9;

/// Sup-norm tolerance between the KL-route and CE-route parameter gradients.
pub const KLCE_TOL: f64 = 1e-10;

/// Largest accepted `residual(eps / 2) / residual(eps)`.
pub const HALVING_RATIO: f64 = 0.75;

/// One checked inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let residual = rhs - lhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            residual,
            tolerance,
            pass: residual >= -tolerance,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn require_distance(spec: MetricSpec) -> Result<()> {
    if spec.is_distance_metric() {
        Ok(())
    } else {
        Err(Error::Precondition("spec must be a distance metric"))
    }
}

/// Both sides of `|R_Madry - C| <= R_SCORE <= R_Madry + C` from precomputed
/// risks. Lower bound first.
pub fn theorem1_bounds(r_madry: f64, r_score: f64, c: f64, tol: f64) -> [BoundReport; 2] {
    [
        BoundReport::new("thm1.lower", (r_madry - c).abs(), r_score, tol),
        BoundReport::new("thm1.upper", r_score, r_madry + c, tol),
    ]
}

/// Risks of one model under one distance metric on a shared grid.
struct SpecRisks {
    spec: MetricSpec,
    standard: f64,
    madry: f64,
    score: f64,
    c: f64,
    trades_reg: f64,
    madry_sq: f64,
}

impl SpecRisks {
    fn new(grid: &BallGrid, t: &ModelTable, spec: MetricSpec) -> Result<Self> {
        require_distance(spec)?;
        Ok(Self {
            spec,
            standard: grid.standard(spec, t)?.value,
            madry: grid.madry(spec, t)?.value,
            score: grid.score(spec, t)?.value,
            c: grid.smoothness(spec)?,
            trades_reg: grid.trades_reg(spec, t)?.value,
            madry_sq: grid.madry(spec.with_phi(Phi::Square), t)?.value,
        })
    }

    fn theorem1(&self) -> [BoundReport; 2] {
        theorem1_bounds(self.madry, self.score, self.c, EXACT_TOL).map(|mut r| {
            r.name = format!("{}[{}]", r.name, self.spec);
            r
        })
    }

    fn variants(&self) -> BoundReport {
        let name = format!("variants[{}]", self.spec);
        BoundReport::new(
            name,
            (self.score - self.c).abs(),
            sqrt(self.madry_sq),
            EXACT_TOL,
        )
    }

    fn equivalence(&self, beta: f64) -> Result<[BoundReport; 2]> {
        if !(beta >= 1.0) || !beta.is_finite() {
            return Err(Error::Precondition("equivalence needs beta >= 1"));
        }
        let trades = self.standard + beta * self.trades_reg;
        let spec = self.spec;
        Ok([
            BoundReport::new(
                format!("equiv.lower[{spec},beta={beta}]"),
                self.madry,
                trades,
                EXACT_TOL,
            ),
            BoundReport::new(
                format!("equiv.upper[{spec},beta={beta}]"),
                trades,
                (1.0 + 2.0 * beta) * self.madry,
                EXACT_TOL,
            ),
        ])
    }
}

/// `|R_Madry^D - C^D| <= R_SCORE^D <= R_Madry^D + C^D` on the grid.
pub fn verify_theorem1<M: Classifier>(
    model: &M,
    grid: &BallGrid,
    spec: MetricSpec,
) -> Result<[BoundReport; 2]> {
    Ok(SpecRisks::new(grid, &grid.model_table(model), spec)?.theorem1())
}

/// `|R_SCORE^D - C^D| <= phi^-1(R_Madry^{phi o D})` for `phi = Square`.
pub fn verify_variants<M: Classifier>(
    model: &M,
    grid: &BallGrid,
    base_spec: MetricSpec,
    phi: Phi,
) -> Result<BoundReport> {
    if phi != Phi::Square {
        return Err(Error::Precondition("variants check needs phi = Square"));
    }
    Ok(SpecRisks::new(grid, &grid.model_table(model), base_spec)?.variants())
}

/// `R_Madry^D <= R_TRADES^D(beta) <= (1 + 2 beta) R_Madry^D`.
pub fn verify_equivalence<M: Classifier>(
    model: &M,
    grid: &BallGrid,
    spec: MetricSpec,
    beta: f64,
) -> Result<[BoundReport; 2]> {
    require_distance(spec)?;
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::Precondition("equivalence needs beta >= 1"));
    }
    SpecRisks::new(grid, &grid.model_table(model), spec)?.equivalence(beta)
}

fn corollary1_on(grid: &BallGrid, t: &ModelTable) -> Result<BoundReport> {
    let score = grid.score(MetricSpec::L1, t)?.value;
    let c = grid.smoothness(MetricSpec::L1)?;
    let madry_kl = grid.madry(MetricSpec::KL, t)?.value;
    Ok(BoundReport::new(
        "cor1",
        (score - c).abs(),
        sqrt(2.0 * madry_kl),
        EXACT_TOL,
    ))
}

/// `|R_SCORE^{l1} - C^{l1}| <= sqrt(2 R_Madry^{KL})`.
pub fn verify_corollary1<M: Classifier>(model: &M, grid: &BallGrid) -> Result<BoundReport> {
    corollary1_on(grid, &grid.model_table(model))
}

/// Every exact sandwich check for one model: Theorem 1, Variants and
/// Equivalence (`beta` in `{1, 2, 6}`) for each distance metric, then
/// Corollary 1.
pub fn exact_suite<M: Classifier>(model: &M, grid: &BallGrid) -> Result<Vec<BoundReport>> {
    let t = grid.model_table(model);
    let mut out = Vec::with_capacity(37);
    for spec in MetricSpec::DISTANCES {
        let r = SpecRisks::new(grid, &t, spec)?;
        out.extend(r.theorem1());
        out.push(r.variants());
        for beta in [1.0, 2.0, 6.0] {
            out.extend(r.equivalence(beta)?);
        }
    }
    out.push(corollary1_on(grid, &t)?);
    Ok(out)
}

/// `eta_hat = (1 - lambda) eta + lambda * net(x)` with `lambda ~ U(0, 1)` and a
/// freshly seeded network: sweeps run from near-oracle to fully random models.
#[derive(Debug, Clone)]
pub struct RandomBlend {
    pub net: MlpModel,
    pub lambda: f64,
}

impl RandomBlend {
    pub fn new(seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0));
        let lambda = rng.random::<f64>();
        let net = MlpModel::two_hidden(16, Activation::Tanh, derive_seed(seed, 1))
            .expect("fixed layer sizes are valid");
        Self { net, lambda }
    }

    pub fn model<'a>(&'a self, dist: &'a ToyDist) -> BlendModel<'a, MlpModel> {
        BlendModel {
            dist,
            inner: &self.net,
            lambda: self.lambda,
        }
    }
}

/// Residuals of the first-order expansion along a decreasing `eps` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `residuals[i + 1] / residuals[i]`; `0/0` counts as `0`.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

impl ConvergenceReport {
    /// One report per consecutive pair: `ratio <= 0.75`.
    pub fn bound_reports(&self) -> Vec<BoundReport> {
        self.ratios
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let name = format!("thm4.ratio[{}/{}]", self.eps[i + 1], self.eps[i]);
                BoundReport::new(name, r, HALVING_RATIO, 0.0)
            })
            .collect()
    }
}

pub const THEOREM4_EPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// `|R_SCORE^{l1}(eps) - R_Standard^{l1} - 2 eps E|eta' - eta_hat'||` for each
/// `eps`, with the ball discretized into `grid_points` candidates.
///
/// Fails with [`Error::Assumption`] at the first evaluation point where the
/// model puts strictly more mass than the data on the Bayes label.
pub fn verify_theorem4_expansion<M: Classifier>(
    model: &M,
    dist: &ToyDist,
    set: &EvalSet,
    eps_list: &[f64],
    grid_points: usize,
) -> Result<ConvergenceReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("eps list must be nonempty".into()));
    }
    if eps_list.iter().any(|e| !(*e >= 0.0) || !e.is_finite())
        || eps_list.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidConfig(
            "eps list must be nonnegative and strictly decreasing".into(),
        ));
    }
    let mut standard = 0.0;
    let mut alignment = 0.0;
    for (x, w) in set.iter() {
        let (e, m) = (dist.eta(x), model.prob_one(x));
        let on_label = |v: f64| if label_of(e) == 1 { v } else { 1.0 - v };
        if on_label(m) > on_label(e) {
            return Err(Error::Assumption { x });
        }
        standard += w * 2.0 * (e - m).abs();
        alignment += w * (dist.eta_dx(x) - model.prob_one_dx(x)).abs();
    }
    let mut residuals = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if eps == 0.0 {
            residuals.push(0.0);
            continue;
        }
        let grid = BallGrid::new(dist, set.clone(), PerturbBall::new(eps, grid_points)?);
        let score = grid.score(MetricSpec::L1, &grid.model_table(model))?.value;
        residuals.push((score - standard - 2.0 * eps * alignment).abs());
    }
    let ratios: Vec<f64> = residuals
        .windows(2)
        .map(|w| match (w[0] == 0.0, w[1] == 0.0) {
            (true, true) => 0.0,
            (true, false) => f64::INFINITY,
            _ => w[1] / w[0],
        })
        .collect();
    let pass = ratios.iter().all(|r| *r <= HALVING_RATIO);
    Ok(ConvergenceReport {
        eps: eps_list.to_vec(),
        residuals,
        ratios,
        pass,
    })
}

/// Noise level, `gamma` and Monte Carlo budget for the smoothing checks.
/// `sigma` is the variance of the added Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub gamma: f64,
    pub mc_samples: usize,
    pub seed: u64,
    /// Central-difference step in `sigma`.
    pub fd_step: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            gamma: 0.0,
            mc_samples: 100_000,
            seed: 0,
            fd_step: 1e-3,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(
                "smoothing.sigma must be finite and nonnegative".into(),
            ));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidConfig(
                "smoothing.gamma must be finite and nonnegative".into(),
            ));
        }
        if self.gamma == 1.0 {
            return Err(Error::Domain("gamma = 1"));
        }
        if self.mc_samples < 1000 {
            return Err(Error::InvalidConfig(
                "smoothing.mc_samples must be at least 1000".into(),
            ));
        }
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(Error::InvalidConfig(
                "smoothing.fd_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Mean and standard error over antithetic pair means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Default)]
struct Accum {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Accum {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn finish(&self) -> Estimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Estimate {
            mean,
            se: sqrt(var / n),
        }
    }
}

/// Monte Carlo moments of the Gaussian-augmented cross-entropy at `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingMoments {
    /// `R_G(0)`.
    pub r_clean: Estimate,
    /// `R_G(sigma)`.
    pub r_sigma: Estimate,
    /// Central difference of `R_G` at `sigma`.
    pub finite_diff: Estimate,
    /// `1/2 E[d/dx ln p_theta(y|x) * d/dx ln p^sigma(x|y)]`.
    pub closed_form: Estimate,
    /// `finite_diff - closed_form`, estimated per pair.
    pub gap: Estimate,
    /// `(R_G(sigma) - gamma R_G(0)) / (1 - gamma)`.
    pub combined: Estimate,
}

fn neg_log_lik<M: Classifier>(model: &M, x: f64, y: Label) -> f64 {
    let m = model.prob_one(x);
    -log(if y == 1 { m } else { 1.0 - m })
}

fn log_lik_dx<M: Classifier>(model: &M, x: f64, y: Label) -> f64 {
    let m = model.prob_one(x);
    let d = model.prob_one_dx(x);
    if y == 1 {
        d / m
    } else {
        -d / (1.0 - m)
    }
}

/// Draws `(y, z, omega)` once per pair and evaluates every quantity at
/// `x = mu_y + s z + sqrt(sigma') omega` for `sigma'` in
/// `{0, sigma - h, sigma, sigma + h}`, then again with `(-z, -omega)`.
pub fn smoothing_moments<M: Classifier>(
    dist: &ToyDist,
    model: &M,
    cfg: &SmoothingConfig,
) -> Result<SmoothingMoments> {
    cfg.validate()?;
    let h = cfg.fd_step;
    if cfg.sigma < h {
        return Err(Error::Precondition("sigma must be at least fd_step"));
    }
    let (mu1, prior_one) = dist.class(1)?;
    let (mu0, _) = dist.class(0)?;
    let var = dist.class_variance()?;
    let s = sqrt(var);
    let (rs, rp, rm) = (sqrt(cfg.sigma), sqrt(cfg.sigma + h), sqrt(cfg.sigma - h));
    let mut rng = seeded(cfg.seed);
    let mut acc: [Accum; 6] = Default::default();
    for _ in 0..cfg.mc_samples / 2 {
        let y = (rng.random::<f64>() < prior_one) as Label;
        let mu = if y == 1 { mu1 } else { mu0 };
        let z: f64 = rng.sample(StandardNormal);
        let w: f64 = rng.sample(StandardNormal);
        let mut pair = [0.0; 6];
        for sign in [1.0, -1.0] {
            let (z, w) = (sign * z, sign * w);
            let x0 = mu + s * z;
            let xs = x0 + rs * w;
            let fd = (neg_log_lik(model, x0 + rp * w, y) - neg_log_lik(model, x0 + rm * w, y))
                / (2.0 * h);
            let cf = 0.5 * log_lik_dx(model, xs, y) * (-(xs - mu) / (var + cfg.sigma));
            let (r0, r1) = (neg_log_lik(model, x0, y), neg_log_lik(model, xs, y));
            let comb = (r1 - cfg.gamma * r0) / (1.0 - cfg.gamma);
            for (slot, v) in pair.iter_mut().zip([r0, r1, fd, cf, fd - cf, comb]) {
                *slot += 0.5 * v;
            }
        }
        for (a, v) in acc.iter_mut().zip(pair) {
            a.push(v);
        }
    }
    let [r_clean, r_sigma, finite_diff, closed_form, gap, combined] = acc.map(|a| a.finish());
    Ok(SmoothingMoments {
        r_clean,
        r_sigma,
        finite_diff,
        closed_form,
        gap,
        combined,
    })
}

/// Outcome of the derivative identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Report {
    pub moments: SmoothingMoments,
    /// `|gap| <= 3 SE(gap) + fd_step^2`.
    pub report: BoundReport,
}

/// `d/dsigma R_G(theta; sigma) = 1/2 E[grad_x ln p_theta(y|x) grad_x ln p^sigma(x|y)]`.
pub fn verify_theorem5_derivative<M: Classifier>(
    dist: &ToyDist,
    model: &M,
    cfg: &SmoothingConfig,
) -> Result<Theorem5Report> {
    let moments = smoothing_moments(dist, model, cfg)?;
    let report = BoundReport::new(
        format!("thm5[sigma={}]", cfg.sigma),
        moments.gap.mean.abs(),
        3.0 * moments.gap.se + cfg.fd_step * cfg.fd_step,
        0.0,
    )
    .with_seed(cfg.seed);
    Ok(Theorem5Report { moments, report })
}

/// The `gamma`-combined loss and its alignment slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub value: Estimate,
    /// `sigma / (2 (1 - gamma))`; negative for `gamma > 1`.
    pub alignment_coeff: f64,
    /// `E[grad_x ln p_theta(y|x) grad_x ln p^sigma(x|y)]`.
    pub alignment: Estimate,
    /// Finite-difference slope of the combined loss in `sigma`.
    pub slope: Estimate,
    /// `alignment / (2 (1 - gamma))`.
    pub predicted_slope: f64,
    pub report: BoundReport,
}

/// `(R_G(sigma) - gamma R_G(0)) / (1 - gamma)`, which for `gamma > 1` is the
/// same quantity as `(gamma R_G(0) - R_G(sigma)) / (gamma - 1)`. Its slope in
/// `sigma` is checked against `1 / (1 - gamma)` times the alignment term.
pub fn gamma_combined_loss<M: Classifier>(
    dist: &ToyDist,
    model: &M,
    cfg: &SmoothingConfig,
) -> Result<GammaReport> {
    if cfg.gamma == 1.0 {
        return Err(Error::Domain("gamma = 1"));
    }
    let m = smoothing_moments(dist, model, cfg)?;
    let k = 1.0 / (1.0 - cfg.gamma);
    let slope = Estimate {
        mean: k * m.finite_diff.mean,
        se: k.abs() * m.finite_diff.se,
    };
    let predicted_slope = k * m.closed_form.mean;
    let report = BoundReport::new(
        format!("gamma[gamma={},sigma={}]", cfg.gamma, cfg.sigma),
        (k * m.gap.mean).abs(),
        k.abs() * (3.0 * m.gap.se + cfg.fd_step * cfg.fd_step),
        0.0,
    )
    .with_seed(cfg.seed);
    Ok(GammaReport {
        value: m.combined,
        alignment_coeff: cfg.sigma * k / 2.0,
        alignment: Estimate {
            mean: 2.0 * m.closed_form.mean,
            se: 2.0 * m.closed_form.se,
        },
        slope,
        predicted_slope,
        report,
    })
}

/// KL-form versus expected-cross-entropy inner maximization at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCeReport {
    /// Candidate index maximizing `KL(p_d(.|x) || p_theta(.|x'))`.
    pub argmax_kl: usize,
    /// Candidate index maximizing `sum_y p_d(y|x) (-ln p_theta(y|x'))`.
    pub argmax_ce: usize,
    /// Sup-norm distance of the two parameter gradients at the maximizer.
    pub grad_sup_diff: f64,
    /// Per-label maximizers of `-ln p_theta(y|x')`, label 0 then label 1.
    pub per_label_argmax: [usize; 2],
    /// The per-label-max form picked a maximizer the KL form did not.
    pub per_label_differs: bool,
    /// Fails when the argmax cells differ or the gradients disagree by more
    /// than `1e-10`.
    pub report: BoundReport,
}

fn argmax_first(values: impl Iterator<Item = f64>, centre: usize) -> usize {
    let values: Vec<f64> = values.collect();
    let mut best = (centre, values[centre]);
    for (k, &v) in values.iter().enumerate() {
        if k != centre && v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// The KL inner objective and the expected cross-entropy differ by the data
/// entropy at `x`, so both must pick the same candidate of `S(x)` and give the
/// same parameter gradient there.
pub fn verify_kl_ce_form(
    model: &MlpModel,
    dist: &ToyDist,
    x: f64,
    ball: &PerturbBall,
) -> Result<KlCeReport> {
    ball.validate()?;
    let e = dist.eta(x);
    let p = [1.0 - e, e];
    let cands: Vec<f64> = ball.candidates(x).collect();
    let probs: Vec<f64> = cands.iter().map(|&xp| model.prob_one(xp)).collect();
    let centre = ball.half();
    let kl: Vec<f64> = probs
        .iter()
        .map(|&m| MetricSpec::KL.eval_raw(&p, &[1.0 - m, m]))
        .collect::<Result<_>>()?;
    let ce = |m: f64| {
        let mut v = 0.0;
        if p[0] > 0.0 {
            v -= p[0] * log(1.0 - m);
        }
        if p[1] > 0.0 {
            v -= p[1] * log(m);
        }
        v
    };
    let argmax_kl = argmax_first(kl.iter().copied(), centre);
    let argmax_ce = argmax_first(probs.iter().map(|&m| ce(m)), centre);
    let per_label_argmax = [
        argmax_first(probs.iter().map(|&m| -log(1.0 - m)), centre),
        argmax_first(probs.iter().map(|&m| -log(m)), centre),
    ];
    let per_label_differs = (0..2).any(|y| p[y] > 0.0 && per_label_argmax[y] != argmax_kl);

    let n = model.param_count();
    let xa = cands[argmax_kl];
    let (m, slope) = model.prob_and_slope(xa);
    let mut g_kl = alloc::vec![0.0; n];
    if slope != 0.0 {
        let mut g = [0.0; 2];
        MetricSpec::KL.grad_q_raw(&p, &[1.0 - m, m], &mut g)?;
        model.accumulate_logit_grad(xa, (g[1] - g[0]) * slope, &mut g_kl);
    }
    let xc = cands[argmax_ce];
    let mut g_ce = alloc::vec![0.0; n];
    if !model.clamped_at(xc) {
        model.accumulate_logit_grad(xc, sigmoid(model.logit(xc)) - p[1], &mut g_ce);
    }
    let grad_sup_diff = g_kl
        .iter()
        .zip(&g_ce)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let lhs = if argmax_kl == argmax_ce {
        grad_sup_diff
    } else {
        f64::INFINITY
    };
    Ok(KlCeReport {
        argmax_kl,
        argmax_ce,
        grad_sup_diff,
        per_label_argmax,
        per_label_differs,
        report: BoundReport::new(format!("klce[x={x}]"), lhs, KLCE_TOL, 0.0),
    })
}
