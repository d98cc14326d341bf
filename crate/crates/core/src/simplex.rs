//! Distances and divergences on the probability simplex.
//!
//! Every metric takes `(p, q)` and, where it matters, is differentiated in
//! either argument. Logarithms are natural. `0 * ln(0 / q)` is taken as `0`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use libm::{log, sqrt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_simplex, seeded};

const SUM_TOL: f64 = 1e-9;

/// A categorical distribution over `L >= 2` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidProbVec("fewer than two entries"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidProbVec(
                "entries must be finite and nonnegative",
            ));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidProbVec("entries do not sum to one"));
        }
        Ok(Self(values))
    }

    /// `(1 - eta, eta)`. Panics if `eta` lies outside `[0, 1]`.
    pub fn binary(eta: f64) -> Self {
        assert!((0.0..=1.0).contains(&eta), "eta = {eta} outside [0, 1]");
        Self(vec![1.0 - eta, eta])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for ProbVec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> core::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(de)?;
        ProbVec::new(values).map_err(serde::de::Error::custom)
    }
}

/// Base metric or divergence as named by a user. `Se` and `SqL1` are
/// shorthands that normalize to `Square` composed with `L2` / `L1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    L1,
    L2,
    Linf,
    JsDist,
    Kl,
    JsDiv,
    Se,
    SqL1,
}

/// Monotone convex outer map applied after the base metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Phi {
    #[default]
    Identity,
    Square,
}

/// `phi(D(p, q))` for a primitive base `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MetricSpec {
    base: Base,
    phi: Phi,
}

impl MetricSpec {
    pub const L1: Self = Self {
        base: Base::L1,
        phi: Phi::Identity,
    };
    pub const L2: Self = Self {
        base: Base::L2,
        phi: Phi::Identity,
    };
    pub const LINF: Self = Self {
        base: Base::Linf,
        phi: Phi::Identity,
    };
    pub const JS_DIST: Self = Self {
        base: Base::JsDist,
        phi: Phi::Identity,
    };
    pub const KL: Self = Self {
        base: Base::Kl,
        phi: Phi::Identity,
    };
    pub const JS_DIV: Self = Self {
        base: Base::JsDiv,
        phi: Phi::Identity,
    };
    pub const SE: Self = Self {
        base: Base::L2,
        phi: Phi::Square,
    };
    pub const SQ_L1: Self = Self {
        base: Base::L1,
        phi: Phi::Square,
    };

    /// The four true distance metrics.
    pub const DISTANCES: [Self; 4] = [Self::L1, Self::L2, Self::LINF, Self::JS_DIST];

    /// The loss column of the metric sweep.
    pub const SWEEP: [Self; 8] = [
        Self::L2,
        Self::L1,
        Self::LINF,
        Self::JS_DIST,
        Self::JS_DIV,
        Self::KL,
        Self::SQ_L1,
        Self::SE,
    ];

    /// Build and normalize. Squaring an already squared shorthand is rejected.
    pub fn new(base: Base, phi: Phi) -> Result<Self> {
        match (base, phi) {
            (Base::Se, Phi::Identity) => Ok(Self::SE),
            (Base::SqL1, Phi::Identity) => Ok(Self::SQ_L1),
            (Base::Se | Base::SqL1, Phi::Square) => Err(Error::InvalidConfig(
                "SE and SqL1 are already squared".to_string(),
            )),
            (base, phi) => Ok(Self { base, phi }),
        }
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn phi(&self) -> Phi {
        self.phi
    }

    /// The same base with `phi` replaced.
    pub fn with_phi(&self, phi: Phi) -> Self {
        Self {
            base: self.base,
            phi,
        }
    }

    /// True for `L1`, `L2`, `Linf` and `JSdist` without an outer square.
    pub fn is_distance_metric(&self) -> bool {
        self.phi == Phi::Identity
            && matches!(self.base, Base::L1 | Base::L2 | Base::Linf | Base::JsDist)
    }

    /// A distance metric paired with this spec for reporting.
    ///
    /// Distances map to themselves, `phi o D` to `D`, `JSdiv` to `JSdist` and
    /// `KL` to `L1` (the Pinsker partner).
    pub fn distance_companion(&self) -> Self {
        match self.base {
            Base::Kl => Self::L1,
            Base::JsDiv => Self::JS_DIST,
            base => Self {
                base,
                phi: Phi::Identity,
            },
        }
    }

    /// `D(p || q)` on raw slices. Callers guarantee both are on the simplex.
    pub fn eval_raw(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        check_dims(p, q)?;
        let squared = self.phi == Phi::Square;
        let d = match self.base {
            Base::L1 => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
            Base::L2 => {
                let ss = sum_sq(p, q);
                if squared {
                    return Ok(ss);
                }
                sqrt(ss)
            }
            Base::Linf => p
                .iter()
                .zip(q)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())),
            Base::Kl => kl(p, q)?,
            Base::JsDiv => js(p, q),
            Base::JsDist => {
                let j = js(p, q);
                if squared {
                    return Ok(j);
                }
                sqrt(j)
            }
            Base::Se | Base::SqL1 => unreachable!("normalized away in MetricSpec::new"),
        };
        Ok(if squared { d * d } else { d })
    }

    pub fn eval(&self, p: &ProbVec, q: &ProbVec) -> Result<f64> {
        self.eval_raw(p.as_slice(), q.as_slice())
    }

    /// `d eval / d q` written into `out`, treating each `q_i` as free.
    pub fn grad_q_raw(&self, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(p, q)?;
        check_dims(q, out)?;
        match self.base {
            Base::Kl => {
                for (i, ((a, b), o)) in p.iter().zip(q).zip(out.iter_mut()).enumerate() {
                    *o = if *a == 0.0 {
                        0.0
                    } else if *b == 0.0 {
                        return Err(Error::InfiniteDivergence { index: i });
                    } else {
                        -a / b
                    };
                }
                self.apply_phi(p, q, out)
            }
            // Every other base is symmetric, so the second-argument gradient
            // is the first-argument gradient with the roles swapped.
            _ => self.grad_first(q, p, out),
        }
    }

    /// `d eval / d p` written into `out`.
    pub fn grad_p_raw(&self, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(p, q)?;
        check_dims(p, out)?;
        match self.base {
            Base::Kl => {
                for (i, ((a, b), o)) in p.iter().zip(q).zip(out.iter_mut()).enumerate() {
                    if *a == 0.0 {
                        return Err(Error::Domain("KL gradient in p is unbounded at p_i = 0"));
                    }
                    if *b == 0.0 {
                        return Err(Error::InfiniteDivergence { index: i });
                    }
                    *o = log(a / b) + 1.0;
                }
                self.apply_phi(p, q, out)
            }
            _ => self.grad_first(p, q, out),
        }
    }

    pub fn grad_q(&self, p: &ProbVec, q: &ProbVec) -> Result<Vec<f64>> {
        let mut out = vec![0.0; q.len()];
        self.grad_q_raw(p.as_slice(), q.as_slice(), &mut out)?;
        Ok(out)
    }

    pub fn grad_p(&self, p: &ProbVec, q: &ProbVec) -> Result<Vec<f64>> {
        let mut out = vec![0.0; p.len()];
        self.grad_p_raw(p.as_slice(), q.as_slice(), &mut out)?;
        Ok(out)
    }

    /// Gradient in the first argument `a` of a symmetric base `D(a, b)`.
    fn grad_first(&self, a: &[f64], b: &[f64], out: &mut [f64]) -> Result<()> {
        let squared = self.phi == Phi::Square;
        match self.base {
            Base::L1 => {
                for ((x, y), o) in a.iter().zip(b).zip(out.iter_mut()) {
                    *o = sign(x - y);
                }
            }
            Base::L2 => {
                if squared {
                    for ((x, y), o) in a.iter().zip(b).zip(out.iter_mut()) {
                        *o = 2.0 * (x - y);
                    }
                    return Ok(());
                }
                let norm = sqrt(sum_sq(a, b));
                for ((x, y), o) in a.iter().zip(b).zip(out.iter_mut()) {
                    *o = if norm > 0.0 { (x - y) / norm } else { 0.0 };
                }
            }
            Base::Linf => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let max = a
                    .iter()
                    .zip(b)
                    .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
                if max > 0.0 {
                    // Entries tied up to rounding count as tied.
                    let cut = max * (1.0 - 1e-12);
                    if let Some(i) = a.iter().zip(b).position(|(x, y)| (x - y).abs() >= cut) {
                        out[i] = sign(a[i] - b[i]);
                    }
                }
            }
            Base::JsDiv | Base::JsDist => {
                for (i, ((x, y), o)) in a.iter().zip(b).zip(out.iter_mut()).enumerate() {
                    *o = if *x == 0.0 {
                        if *y > 0.0 {
                            return Err(Error::InfiniteDivergence { index: i });
                        }
                        0.0
                    } else {
                        0.5 * log(2.0 * x / (x + y))
                    };
                }
                if self.base == Base::JsDist {
                    if !squared {
                        let j = js(a, b);
                        let scale = if j > 0.0 { 0.5 / sqrt(j) } else { 0.0 };
                        out.iter_mut().for_each(|o| *o *= scale);
                    }
                    return Ok(());
                }
            }
            Base::Kl | Base::Se | Base::SqL1 => unreachable!("handled by callers"),
        }
        self.apply_phi(a, b, out)
    }

    /// Chain rule through `Square` for bases without a direct squared path.
    fn apply_phi(&self, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
        if self.phi == Phi::Square {
            let d = self.with_phi(Phi::Identity).eval_raw(p, q)?;
            out.iter_mut().for_each(|o| *o *= 2.0 * d);
        }
        Ok(())
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            Base::L1 => "L1",
            Base::L2 => "L2",
            Base::Linf => "Linf",
            Base::JsDist => "JSdist",
            Base::Kl => "KL",
            Base::JsDiv => "JSdiv",
            Base::Se => "SE",
            Base::SqL1 => "SqL1",
        };
        match (self.base, self.phi) {
            (_, Phi::Identity) => f.write_str(base),
            (Base::L2, Phi::Square) => f.write_str("SE"),
            (Base::L1, Phi::Square) => f.write_str("SqL1"),
            (_, Phi::Square) => write!(f, "Sq({base})"),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_base = |s: &str| -> Result<Base> {
            Ok(match s.to_ascii_lowercase().as_str() {
                "l1" => Base::L1,
                "l2" => Base::L2,
                "linf" => Base::Linf,
                "jsdist" => Base::JsDist,
                "kl" => Base::Kl,
                "jsdiv" => Base::JsDiv,
                "se" => Base::Se,
                "sql1" => Base::SqL1,
                _ => return Err(Error::InvalidConfig(alloc::format!("unknown metric `{s}`"))),
            })
        };
        let s = s.trim();
        match s.strip_prefix("Sq(").and_then(|r| r.strip_suffix(')')) {
            Some(inner) => MetricSpec::new(parse_base(inner)?, Phi::Square),
            None => MetricSpec::new(parse_base(s)?, Phi::Identity),
        }
    }
}

impl From<MetricSpec> for String {
    fn from(spec: MetricSpec) -> String {
        spec.to_string()
    }
}

impl TryFrom<String> for MetricSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Worst observed violations of the metric axioms over random triples.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub spec: MetricSpec,
    pub trials: usize,
    /// Triples skipped because some divergence was infinite.
    pub skipped: usize,
    pub max_symmetry_violation: f64,
    pub max_triangle_violation: f64,
    pub max_nonnegativity_violation: f64,
    pub max_identity_violation: f64,
}

impl AxiomReport {
    /// All four violations within `tol`.
    pub fn satisfied(&self, tol: f64) -> bool {
        self.max_symmetry_violation <= tol
            && self.max_triangle_violation <= tol
            && self.max_nonnegativity_violation <= tol
            && self.max_identity_violation <= tol
    }
}

/// Sample `trials` uniform triples `(P, Q, R)` and record axiom violations.
/// The simplex dimension cycles through 2, 3, 4, 5.
pub fn check_axioms(spec: MetricSpec, trials: usize, seed: u64) -> AxiomReport {
    let mut rng = seeded(seed);
    let mut report = AxiomReport {
        spec,
        trials,
        skipped: 0,
        max_symmetry_violation: 0.0,
        max_triangle_violation: 0.0,
        max_nonnegativity_violation: 0.0,
        max_identity_violation: 0.0,
    };
    for t in 0..trials {
        let dim = 2 + t % 4;
        let p = sample_simplex(&mut rng, dim);
        let q = sample_simplex(&mut rng, dim);
        let r = sample_simplex(&mut rng, dim);
        let evals = (
            spec.eval(&p, &q),
            spec.eval(&q, &p),
            spec.eval(&p, &r),
            spec.eval(&r, &q),
            spec.eval(&p, &p),
        );
        let (Ok(pq), Ok(qp), Ok(pr), Ok(rq), Ok(pp)) = evals else {
            report.skipped += 1;
            continue;
        };
        report.max_symmetry_violation = report.max_symmetry_violation.max((pq - qp).abs());
        report.max_triangle_violation = report.max_triangle_violation.max(pq - pr - rq);
        report.max_nonnegativity_violation = report
            .max_nonnegativity_violation
            .max(-pq)
            .max(-qp)
            .max(-pr)
            .max(-rq);
        report.max_identity_violation = report.max_identity_violation.max(pp.abs());
    }
    report
}

/// `KL(p || q) - 0.5 * ||p - q||_1^2`, nonnegative by Pinsker.
pub fn pinsker_gap(p: &ProbVec, q: &ProbVec) -> Result<f64> {
    let kl = MetricSpec::KL.eval(p, q)?;
    let l1 = MetricSpec::L1.eval(p, q)?;
    Ok(kl - 0.5 * l1 * l1)
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sum_sq(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, (a, b)) in p.iter().zip(q).enumerate() {
        if *a == 0.0 {
            continue;
        }
        if *b == 0.0 {
            return Err(Error::InfiniteDivergence { index: i });
        }
        total += a * log(a / b);
    }
    Ok(total)
}

fn js(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if *a > 0.0 {
            total += 0.5 * a * log(a / m);
        }
        if *b > 0.0 {
            total += 0.5 * b * log(b / m);
        }
    }
    total.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVec {
        ProbVec::new(v.to_vec()).unwrap()
    }

    const ALL: [MetricSpec; 12] = [
        MetricSpec::L1,
        MetricSpec::L2,
        MetricSpec::LINF,
        MetricSpec::JS_DIST,
        MetricSpec::KL,
        MetricSpec::JS_DIV,
        MetricSpec::SE,
        MetricSpec::SQ_L1,
        MetricSpec {
            base: Base::Linf,
            phi: Phi::Square,
        },
        MetricSpec {
            base: Base::JsDist,
            phi: Phi::Square,
        },
        MetricSpec {
            base: Base::Kl,
            phi: Phi::Square,
        },
        MetricSpec {
            base: Base::JsDiv,
            phi: Phi::Square,
        },
    ];

    #[test]
    fn probvec_validation() {
        assert!(ProbVec::new(vec![1.0]).is_err());
        assert!(ProbVec::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVec::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVec::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVec::new(vec![0.3, 0.7 + 5e-10]).is_ok());
    }

    #[test]
    fn hand_values() {
        let e0 = pv(&[1.0, 0.0]);
        let e1 = pv(&[0.0, 1.0]);
        let half = pv(&[0.5, 0.5]);
        assert_eq!(MetricSpec::L1.eval(&e0, &e1).unwrap(), 2.0);
        assert_eq!(MetricSpec::SE.eval(&e0, &e1).unwrap(), 2.0);
        assert_eq!(MetricSpec::KL.eval(&half, &half).unwrap(), 0.0);
        let ln2 = core::f64::consts::LN_2;
        assert!((MetricSpec::KL.eval(&e0, &half).unwrap() - ln2).abs() < 1e-15);
        assert!((MetricSpec::JS_DIV.eval(&e0, &e1).unwrap() - ln2).abs() < 1e-15);
        assert!((pinsker_gap(&e0, &half).unwrap() - (ln2 - 0.5)).abs() < 1e-15);
        assert_eq!(pinsker_gap(&half, &half).unwrap(), 0.0);
    }

    #[test]
    fn kl_signals_infinite() {
        let e0 = pv(&[1.0, 0.0]);
        let e1 = pv(&[0.0, 1.0]);
        assert_eq!(
            MetricSpec::KL.eval(&e0, &e1),
            Err(Error::InfiniteDivergence { index: 0 })
        );
        assert!(pinsker_gap(&e0, &e1).is_err());
        // zero mass in p is harmless
        assert!(MetricSpec::KL.eval(&e1, &pv(&[0.5, 0.5])).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let a = pv(&[0.5, 0.5]);
        let b = pv(&[0.2, 0.3, 0.5]);
        for spec in ALL {
            assert_eq!(
                spec.eval(&a, &b),
                Err(Error::DimensionMismatch { left: 2, right: 3 })
            );
        }
    }

    #[test]
    fn shorthands_normalize() {
        assert_eq!(
            MetricSpec::new(Base::Se, Phi::Identity).unwrap(),
            MetricSpec::SE
        );
        assert_eq!(MetricSpec::SE.base(), Base::L2);
        assert_eq!(MetricSpec::SE.phi(), Phi::Square);
        assert_eq!(
            MetricSpec::new(Base::SqL1, Phi::Identity).unwrap().base(),
            Base::L1
        );
        assert!(MetricSpec::new(Base::Se, Phi::Square).is_err());
        assert!(!MetricSpec::SE.is_distance_metric());
        assert!(!MetricSpec::SQ_L1.is_distance_metric());
        assert!(!MetricSpec::KL.is_distance_metric());
        assert!(!MetricSpec::JS_DIV.is_distance_metric());
        for d in MetricSpec::DISTANCES {
            assert!(d.is_distance_metric());
        }
    }

    #[test]
    fn names_round_trip() {
        for spec in ALL {
            let name = spec.to_string();
            assert_eq!(name.parse::<MetricSpec>().unwrap(), spec, "{name}");
        }
        assert_eq!("se".parse::<MetricSpec>().unwrap(), MetricSpec::SE);
        assert!("cosine".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn companions_are_distances() {
        for spec in ALL {
            assert!(spec.distance_companion().is_distance_metric());
        }
        assert_eq!(MetricSpec::KL.distance_companion(), MetricSpec::L1);
        assert_eq!(MetricSpec::SE.distance_companion(), MetricSpec::L2);
        assert_eq!(MetricSpec::JS_DIV.distance_companion(), MetricSpec::JS_DIST);
    }

    #[test]
    fn grad_hand_values() {
        let half = pv(&[0.5, 0.5]);
        assert_eq!(MetricSpec::SE.grad_q(&half, &half).unwrap(), vec![0.0, 0.0]);
        let p = pv(&[0.3, 0.7]);
        let g = MetricSpec::KL.grad_q(&p, &p).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15 && (g[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn linf_ties_go_to_lowest_index() {
        let p = pv(&[0.5, 0.5]);
        let q = pv(&[0.7, 0.3]);
        assert_eq!(MetricSpec::LINF.grad_q(&p, &q).unwrap(), vec![1.0, 0.0]);
        assert_eq!(MetricSpec::LINF.grad_p(&p, &q).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn js_distance_is_root_of_divergence() {
        let mut rng = seeded(3);
        for _ in 0..1000 {
            let p = sample_simplex(&mut rng, 3);
            let q = sample_simplex(&mut rng, 3);
            let div = MetricSpec::JS_DIV.eval(&p, &q).unwrap();
            assert_eq!(MetricSpec::JS_DIST.eval(&p, &q).unwrap(), sqrt(div));
            assert!(div <= core::f64::consts::LN_2);
        }
    }

    #[test]
    fn axioms_hold_for_distances() {
        for spec in MetricSpec::DISTANCES {
            let r = check_axioms(spec, 2000, 11);
            assert!(r.satisfied(1e-9), "{spec}: {r:?}");
            assert!(r.max_symmetry_violation <= 1e-12);
        }
    }

    #[test]
    fn axioms_flag_kl_asymmetry() {
        let r = check_axioms(MetricSpec::KL, 2000, 11);
        assert!(r.max_symmetry_violation > 0.0);
        let a = pv(&[0.9, 0.1]);
        let b = pv(&[0.5, 0.5]);
        assert!(MetricSpec::KL.eval(&a, &b).unwrap() != MetricSpec::KL.eval(&b, &a).unwrap());
    }

    fn interior(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.05f64..1.0, dim).prop_map(|v| {
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect()
        })
    }

    fn fd_check(spec: MetricSpec, p: &[f64], q: &[f64], wrt_q: bool) -> f64 {
        let h = 1e-5;
        let mut analytic = vec![0.0; p.len()];
        if wrt_q {
            spec.grad_q_raw(p, q, &mut analytic).unwrap();
        } else {
            spec.grad_p_raw(p, q, &mut analytic).unwrap();
        }
        let mut worst = 0.0_f64;
        for i in 0..p.len() {
            let bump = |delta: f64| {
                let (mut a, mut b) = (p.to_vec(), q.to_vec());
                if wrt_q {
                    b[i] += delta;
                } else {
                    a[i] += delta;
                }
                spec.eval_raw(&a, &b).unwrap()
            };
            let fd = (8.0 * (bump(h) - bump(-h)) - (bump(2.0 * h) - bump(-2.0 * h))) / (12.0 * h);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
            worst = worst.max(err);
        }
        worst
    }

    proptest! {
        #[test]
        fn grads_match_finite_differences(p in interior(3), q in interior(3)) {
            // Keep the stencil away from the kinks of L1, Linf and the root at p = q.
            let far = p.iter().zip(&q).all(|(a, b)| (a - b).abs() > 0.02);
            prop_assume!(far);
            let mut diffs: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).collect();
            diffs.sort_by(f64::total_cmp);
            prop_assume!(diffs[2] - diffs[1] > 0.02);
            for spec in ALL {
                prop_assert!(fd_check(spec, &p, &q, true) <= 1e-6, "grad_q {}", spec);
                prop_assert!(fd_check(spec, &p, &q, false) <= 1e-6, "grad_p {}", spec);
            }
        }

        #[test]
        fn self_distance_is_zero(p in interior(4)) {
            for spec in ALL {
                prop_assert_eq!(spec.eval_raw(&p, &p).unwrap(), 0.0);
            }
        }

        #[test]
        fn pinsker_holds(p in interior(3), q in interior(3)) {
            let gap = pinsker_gap(&ProbVec::new(p).unwrap(), &ProbVec::new(q).unwrap()).unwrap();
            prop_assert!(gap >= -1e-12);
        }
    }
}
