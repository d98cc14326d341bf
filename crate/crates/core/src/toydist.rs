//! Closed-form one-dimensional joint distributions `p_d(x, y)` with binary `y`.

use alloc::format;
use alloc::vec::Vec;

use libm::{cos, erfc, exp, sin, sqrt};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::simplex::{MetricSpec, Phi, ProbVec};

/// Class label, `0` or `1`.
pub type Label = u8;

/// A toy joint distribution. `eta(x) = p_d(y = 1 | x)`.
///
/// Queries outside `support` use the conditional at the nearest endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ToyDist {
    /// Uniform marginal; `eta` interpolates `(x, eta)` knots linearly and is
    /// flat beyond the outermost knots.
    PiecewiseLinearEta {
        support: [f64; 2],
        knots: Vec<[f64; 2]>,
    },
    /// Uniform marginal; `eta(x) = 0.5 + amplitude * sin(frequency * x)`.
    SmoothSineEta {
        support: [f64; 2],
        amplitude: f64,
        frequency: f64,
    },
    /// `x | y=1 ~ N(mu0, variance)`, `x | y=0 ~ N(-mu0, variance)`,
    /// `P(y=1) = prior_one`.
    GaussianPair {
        support: [f64; 2],
        mu0: f64,
        variance: f64,
        prior_one: f64,
    },
}

impl Default for ToyDist {
    fn default() -> Self {
        Self::SmoothSineEta {
            support: [-4.0, 4.0],
            amplitude: 0.45,
            frequency: 0.6,
        }
    }
}

impl ToyDist {
    pub fn smooth_sine(support: [f64; 2], amplitude: f64, frequency: f64) -> Result<Self> {
        let d = Self::SmoothSineEta {
            support,
            amplitude,
            frequency,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn piecewise(support: [f64; 2], knots: Vec<[f64; 2]>) -> Result<Self> {
        let d = Self::PiecewiseLinearEta { support, knots };
        d.validate()?;
        Ok(d)
    }

    /// Constant conditional `eta` on `support`.
    pub fn constant(support: [f64; 2], eta: f64) -> Result<Self> {
        Self::piecewise(support, alloc::vec![[support[0], eta], [support[1], eta]])
    }

    /// Gaussian pair on the support `[-|mu0| - 8s, |mu0| + 8s]`.
    pub fn gaussian_pair(mu0: f64, variance: f64, prior_one: f64) -> Result<Self> {
        let reach = mu0.abs() + 8.0 * sqrt(variance.max(0.0));
        let d = Self::GaussianPair {
            support: [-reach, reach],
            mu0,
            variance,
            prior_one,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("distribution: {msg}")));
        let [lo, hi] = self.support_array();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("support must be a finite interval with lo < hi");
        }
        match self {
            Self::PiecewiseLinearEta { knots, .. } => {
                if knots.len() < 2 {
                    return bad("at least two knots required");
                }
                if knots
                    .iter()
                    .any(|[x, e]| !x.is_finite() || !(0.0..=1.0).contains(e))
                {
                    return bad("knot eta values must lie in [0, 1]");
                }
                if knots.windows(2).any(|w| w[0][0] >= w[1][0]) {
                    return bad("knot positions must be strictly increasing");
                }
            }
            Self::SmoothSineEta {
                amplitude,
                frequency,
                ..
            } => {
                if !(amplitude.abs() <= 0.5) || !frequency.is_finite() {
                    return bad("|amplitude| must be at most 0.5 and frequency finite");
                }
            }
            Self::GaussianPair {
                mu0,
                variance,
                prior_one,
                ..
            } => {
                if !mu0.is_finite() || !(*variance > 0.0) || !variance.is_finite() {
                    return bad("mu0 must be finite and variance positive");
                }
                if !(*prior_one > 0.0 && *prior_one < 1.0) {
                    return bad("prior_one must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }

    fn support_array(&self) -> [f64; 2] {
        match self {
            Self::PiecewiseLinearEta { support, .. }
            | Self::SmoothSineEta { support, .. }
            | Self::GaussianPair { support, .. } => *support,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        let [lo, hi] = self.support_array();
        (lo, hi)
    }

    fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        x.clamp(lo, hi)
    }

    fn inside(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        (lo..=hi).contains(&x)
    }

    /// `p_d(y = 1 | x)`.
    pub fn eta(&self, x: f64) -> f64 {
        let x = self.clamp(x);
        match self {
            Self::PiecewiseLinearEta { knots, .. } => {
                let (i, t) = locate(knots, x);
                match i {
                    None => t,
                    Some(i) => {
                        let [x0, e0] = knots[i];
                        let [x1, e1] = knots[i + 1];
                        e0 + (e1 - e0) * (x - x0) / (x1 - x0)
                    }
                }
            }
            Self::SmoothSineEta {
                amplitude,
                frequency,
                ..
            } => (0.5 + amplitude * sin(frequency * x)).clamp(0.0, 1.0),
            Self::GaussianPair {
                mu0,
                variance,
                prior_one,
                ..
            } => {
                let z = 2.0 * mu0 * x / variance + logit(*prior_one);
                sigmoid(z)
            }
        }
    }

    /// `d eta / dx`; right derivative at knots, zero outside the support.
    pub fn eta_dx(&self, x: f64) -> f64 {
        if !self.inside(x) {
            return 0.0;
        }
        match self {
            Self::PiecewiseLinearEta { knots, .. } => match locate(knots, x).0 {
                None => 0.0,
                Some(i) => {
                    let [x0, e0] = knots[i];
                    let [x1, e1] = knots[i + 1];
                    (e1 - e0) / (x1 - x0)
                }
            },
            Self::SmoothSineEta {
                amplitude,
                frequency,
                ..
            } => amplitude * frequency * cos(frequency * x),
            Self::GaussianPair { mu0, variance, .. } => {
                let e = self.eta(x);
                e * (1.0 - e) * 2.0 * mu0 / variance
            }
        }
    }

    /// `(p_d(0 | x), p_d(1 | x))`.
    pub fn cond_prob(&self, x: f64) -> ProbVec {
        ProbVec::binary(self.eta(x))
    }

    /// Marginal density `p_d(x)`.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Self::PiecewiseLinearEta { .. } | Self::SmoothSineEta { .. } => {
                let (lo, hi) = self.support();
                if self.inside(x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::GaussianPair {
                mu0,
                variance,
                prior_one,
                ..
            } => {
                let s = sqrt(*variance);
                prior_one * normal_pdf((x - mu0) / s) / s
                    + (1.0 - prior_one) * normal_pdf((x + mu0) / s) / s
            }
        }
    }

    fn marginal_cdf(&self, x: f64) -> f64 {
        match self {
            Self::GaussianPair {
                mu0,
                variance,
                prior_one,
                ..
            } => {
                let s = sqrt(*variance);
                prior_one * normal_cdf((x - mu0) / s)
                    + (1.0 - prior_one) * normal_cdf((x + mu0) / s)
            }
            _ => {
                let (lo, hi) = self.support();
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
        }
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            Self::GaussianPair { mu0, variance, .. } => {
                let reach = mu0.abs() + 40.0 * sqrt(*variance);
                let (mut a, mut b) = (-reach, reach);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.marginal_cdf(mid) < u {
                        a = mid;
                    } else {
                        b = mid;
                    }
                    if b - a <= 1e-13 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                0.5 * (a + b)
            }
            _ => {
                let (lo, hi) = self.support();
                lo + u * (hi - lo)
            }
        }
    }

    /// `n` i.i.d. pairs: inverse-CDF draw of `x`, then `y ~ Bernoulli(eta(x))`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<(f64, Label)> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| {
                let x = self.inverse_cdf(rng.random::<f64>());
                let y = (rng.random::<f64>() < self.eta(x)) as Label;
                (x, y)
            })
            .collect()
    }

    /// Bayes label; `eta = 0.5` resolves to `0`.
    pub fn hard_label(&self, x: f64) -> Label {
        label_of(self.eta(x))
    }

    /// `d/dx ln p_d(y | x)`.
    pub fn data_log_grad(&self, x: f64, y: Label) -> Result<f64> {
        let e = self.eta(x);
        let p = if y == 1 { e } else { 1.0 - e };
        if p <= 0.0 {
            return Err(Error::Domain("p_d(y|x) = 0"));
        }
        let d = self.eta_dx(x);
        Ok(if y == 1 { d / e } else { -d / (1.0 - e) })
    }

    /// Class-conditional mean and prior.
    pub fn class(&self, y: Label) -> Result<(f64, f64)> {
        match self {
            Self::GaussianPair { mu0, prior_one, .. } => Ok(if y == 1 {
                (*mu0, *prior_one)
            } else {
                (-mu0, 1.0 - prior_one)
            }),
            _ => Err(Error::UnsupportedKind {
                required: "GaussianPair",
            }),
        }
    }

    /// Class-conditional variance of the Gaussian pair.
    pub fn class_variance(&self) -> Result<f64> {
        match self {
            Self::GaussianPair { variance, .. } => Ok(*variance),
            _ => Err(Error::UnsupportedKind {
                required: "GaussianPair",
            }),
        }
    }

    /// `d/dx ln p^sigma(x | y)` where `p^sigma(.|y)` is the class conditional
    /// convolved with `N(0, sigma)`.
    pub fn smoothed_cond_log_grad(&self, x: f64, y: Label, sigma: f64) -> Result<f64> {
        let (mean, _) = self.class(y)?;
        if !(sigma >= 0.0) {
            return Err(Error::Domain("sigma must be nonnegative"));
        }
        Ok(-(x - mean) / (self.class_variance()? + sigma))
    }

    /// Density-weighted trapezoid rule on `n` equispaced support points.
    pub fn quadrature(&self, n: usize) -> EvalSet {
        assert!(n >= 2, "quadrature needs at least two points");
        let (lo, hi) = self.support();
        let step = (hi - lo) / (n - 1) as f64;
        let points: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
            .collect();
        let raw: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let end = i == 0 || i == n - 1;
                (if end { 0.5 } else { 1.0 }) * self.density(x)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        EvalSet {
            points,
            weights: raw.into_iter().map(|w| w / total).collect(),
        }
    }

    /// `max_{x' in S(x)} D(p_d(.|x) || p_d(.|x'))`.
    pub fn max_cond_shift(&self, x: f64, ball: &PerturbBall, spec: MetricSpec) -> Result<f64> {
        let e = self.eta(x);
        let p = [1.0 - e, e];
        let mut best = 0.0_f64;
        for xp in ball.candidates(x) {
            let ep = self.eta(xp);
            best = best.max(spec.eval_raw(&p, &[1.0 - ep, ep])?);
        }
        Ok(best)
    }

    /// `C^D` averaged over an arbitrary evaluation set.
    pub fn c_over(&self, set: &EvalSet, ball: &PerturbBall, spec: MetricSpec) -> Result<f64> {
        let mut total = 0.0;
        for (x, w) in set.iter() {
            total += w * self.max_cond_shift(x, ball, spec)?;
        }
        Ok(total)
    }

    /// The smoothness constant `C^D = E_x max_{x' in S(x)} D(p_d(.|x) || p_d(.|x'))`.
    pub fn compute_c(
        &self,
        ball: &PerturbBall,
        spec: MetricSpec,
        outer_grid: usize,
    ) -> Result<ConstantC> {
        if spec.phi() != Phi::Identity {
            return Err(Error::Precondition(
                "C is defined for the base metric (phi = Identity)",
            ));
        }
        if outer_grid < 10 {
            return Err(Error::Precondition("outer_grid must be at least 10"));
        }
        let set = self.quadrature(outer_grid);
        let (lo, hi) = self.support();
        Ok(ConstantC {
            metric: spec,
            value: self.c_over(&set, ball, spec)?,
            grid_resolution: (hi - lo) / (outer_grid - 1) as f64,
        })
    }
}

/// Segment index `i` with `knots[i].x <= x < knots[i+1].x`, or the flat
/// value when `x` lies outside the knot range.
fn locate(knots: &[[f64; 2]], x: f64) -> (Option<usize>, f64) {
    let last = knots.len() - 1;
    if x < knots[0][0] {
        return (None, knots[0][1]);
    }
    if x >= knots[last][0] {
        return (None, knots[last][1]);
    }
    let i = knots.partition_point(|k| k[0] <= x) - 1;
    (Some(i), 0.0)
}

pub(crate) fn label_of(eta: f64) -> Label {
    (eta > 0.5) as Label
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

fn normal_pdf(z: f64) -> f64 {
    exp(-0.5 * z * z) / sqrt(2.0 * core::f64::consts::PI)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / core::f64::consts::SQRT_2)
}

/// Weighted evaluation points; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EvalSet {
    /// Equal weights over `points`.
    pub fn uniform(points: Vec<f64>) -> Self {
        assert!(!points.is_empty(), "evaluation set must be nonempty");
        let w = 1.0 / points.len() as f64;
        let weights = alloc::vec![w; points.len()];
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

/// The interval `[x - epsilon, x + epsilon]` and its shared discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbBall {
    pub epsilon: f64,
    pub grid_points: usize,
}

impl Default for PerturbBall {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            grid_points: 41,
        }
    }
}

impl PerturbBall {
    pub fn new(epsilon: f64, grid_points: usize) -> Result<Self> {
        let b = Self {
            epsilon,
            grid_points,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("ball.epsilon must be positive".into()));
        }
        if self.grid_points < 3 || self.grid_points.is_multiple_of(2) {
            return Err(Error::InvalidConfig(
                "ball.grid_points must be odd and at least 3".into(),
            ));
        }
        Ok(())
    }

    /// `(grid_points - 1) / 2`; also the index of `x` in [`Self::candidates`].
    pub fn half(&self) -> usize {
        (self.grid_points - 1) / 2
    }

    pub fn spacing(&self) -> f64 {
        self.epsilon / self.half() as f64
    }

    /// `x + k * epsilon / half` for `k = -half..=half`, in increasing order.
    pub fn candidates(&self, x: f64) -> impl Iterator<Item = f64> {
        let h = self.half() as i64;
        let step = self.spacing();
        (-h..=h).map(move |k| x + k as f64 * step)
    }
}

/// The smoothness constant of a distribution under one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantC {
    pub metric: MetricSpec,
    pub value: f64,
    pub grid_resolution: f64,
}
