//! Theorem sweeps over random models, reported as JSON lines.

use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use score_core::mlp::{Activation, LogisticModel, MlpModel, TemperedOracle};
use score_core::objectives::BallGrid;
use score_core::rng::{derive_seed, seeded};
use score_core::simplex::Phi;
use score_core::theorems::{
    exact_suite, gamma_combined_loss, theorem1_bounds, verify_corollary1, verify_equivalence,
    verify_kl_ce_form, verify_theorem1, verify_theorem4_expansion, verify_theorem5_derivative,
    verify_variants, BoundReport, RandomBlend, SmoothingConfig, EXACT_TOL, THEOREM4_EPS,
};
use score_core::toydist::{PerturbBall, ToyDist};
use score_core::MetricSpec;

use crate::error::LabError;

pub const SIGMAS: [f64; 3] = [0.25, 0.5, 1.0];
pub const GAMMAS: [f64; 4] = [0.0, 0.5, 0.75, 2.0];
pub const BETAS: [f64; 3] = [1.0, 2.0, 6.0];
/// Quadrature nodes of the exact checks.
pub const EXACT_POINTS: usize = 161;
/// Quadrature nodes of the expansion check.
pub const EXPANSION_POINTS: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Thm1,
    Variants,
    Equiv,
    Cor1,
    Thm4,
    Thm5,
    Klce,
    Gamma,
}

impl Scope {
    pub const ALL: [Scope; 9] = [
        Self::All,
        Self::Thm1,
        Self::Variants,
        Self::Equiv,
        Self::Cor1,
        Self::Thm4,
        Self::Thm5,
        Self::Klce,
        Self::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Thm1 => "thm1",
            Self::Variants => "variants",
            Self::Equiv => "equiv",
            Self::Cor1 => "cor1",
            Self::Thm4 => "thm4",
            Self::Thm5 => "thm5",
            Self::Klce => "klce",
            Self::Gamma => "gamma",
        }
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| {
            format!("unknown scope {s:?}; expected one of all, thm1, variants, equiv, cor1, thm4, thm5, klce, gamma")
        })
    }
}

/// Deliberate defects for testing that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Use half the smoothness constant in the Theorem 1 bounds.
    HalveC,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "halve-c" => Ok(Self::HalveC),
            _ => Err(format!("unknown fault {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub scope: Scope,
    pub trials: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
    pub dist: ToyDist,
    pub ball: PerturbBall,
}

impl VerifyOptions {
    pub fn new(scope: Scope, trials: usize, seed: u64) -> Self {
        Self {
            scope,
            trials,
            seed,
            fault: None,
            dist: ToyDist::default(),
            ball: PerturbBall::default(),
        }
    }
}

fn trial_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, t as u64)
}

fn faulty_theorem1(
    grid: &BallGrid,
    blend: &RandomBlend,
    dist: &ToyDist,
    spec: MetricSpec,
) -> Result<[BoundReport; 2], LabError> {
    let t = grid.model_table(&blend.model(dist));
    let madry = grid.madry(spec, &t)?.value;
    let score = grid.score(spec, &t)?.value;
    let c = grid.smoothness(spec)? / 2.0;
    let [mut lo, mut hi] = theorem1_bounds(madry, score, c, EXACT_TOL);
    lo.name = format!("{}[{spec}]", lo.name);
    hi.name = format!("{}[{spec}]", hi.name);
    Ok([lo, hi])
}

fn exact_trial(o: &VerifyOptions, grid: &BallGrid, t: usize) -> Result<Vec<BoundReport>, LabError> {
    let seed = trial_seed(o.seed, t);
    let blend = RandomBlend::new(seed);
    let model = blend.model(&o.dist);
    let spec = MetricSpec::DISTANCES[t % MetricSpec::DISTANCES.len()];
    let halve = o.fault == Some(Fault::HalveC);
    let mut out = match o.scope {
        Scope::Thm1 if halve => faulty_theorem1(grid, &blend, &o.dist, spec)?.to_vec(),
        Scope::Thm1 => verify_theorem1(&model, grid, spec)?.to_vec(),
        Scope::Variants => vec![verify_variants(&model, grid, spec, Phi::Square)?],
        Scope::Equiv => {
            let mut v = Vec::new();
            for beta in BETAS {
                v.extend(verify_equivalence(&model, grid, spec, beta)?);
            }
            v
        }
        Scope::Cor1 => vec![verify_corollary1(&model, grid)?],
        _ => {
            let mut v = exact_suite(&model, grid)?;
            if halve {
                for spec in MetricSpec::DISTANCES {
                    for r in faulty_theorem1(grid, &blend, &o.dist, spec)? {
                        if let Some(slot) = v.iter_mut().find(|s| s.name == r.name) {
                            *slot = r;
                        }
                    }
                }
            }
            v
        }
    };
    for r in &mut out {
        r.seed = seed;
    }
    Ok(out)
}

fn klce_trial(o: &VerifyOptions, t: usize) -> Result<BoundReport, LabError> {
    let seed = trial_seed(o.seed, t);
    let net = MlpModel::two_hidden(16, Activation::Tanh, derive_seed(seed, 3))?;
    let (lo, hi) = o.dist.support();
    let x = seeded(derive_seed(seed, 4)).random_range(lo..=hi);
    Ok(verify_kl_ce_form(&net, &o.dist, x, &o.ball)?
        .report
        .with_seed(seed))
}

fn theorem4(o: &VerifyOptions) -> Result<Vec<BoundReport>, LabError> {
    let model = TemperedOracle {
        dist: &o.dist,
        temperature: 2.0,
    };
    let set = o.dist.quadrature(EXPANSION_POINTS);
    let report =
        verify_theorem4_expansion(&model, &o.dist, &set, &THEOREM4_EPS, o.ball.grid_points)?;
    Ok(report
        .bound_reports()
        .into_iter()
        .map(|r| r.with_seed(o.seed))
        .collect())
}

/// The Gaussian pair and logistic model of the smoothing checks.
pub fn smoothing_setup() -> (ToyDist, LogisticModel) {
    let dist = ToyDist::gaussian_pair(1.0, 1.0, 0.5).expect("valid pair");
    (
        dist,
        LogisticModel {
            slope: 1.5,
            offset: 0.2,
        },
    )
}

fn smoothing_cfg(seed: u64, stream: u64, sigma: f64, gamma: f64) -> SmoothingConfig {
    SmoothingConfig {
        sigma,
        gamma,
        seed: derive_seed(seed, stream),
        ..SmoothingConfig::default()
    }
}

fn theorem5(o: &VerifyOptions) -> Result<Vec<BoundReport>, LabError> {
    let (dist, model) = smoothing_setup();
    SIGMAS
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let cfg = smoothing_cfg(o.seed, 10_000 + i as u64, sigma, 0.0);
            Ok(verify_theorem5_derivative(&dist, &model, &cfg)?.report)
        })
        .collect()
}

fn gamma(o: &VerifyOptions) -> Result<Vec<BoundReport>, LabError> {
    let (dist, model) = smoothing_setup();
    GAMMAS
        .par_iter()
        .map(|&g| {
            // One stream for every gamma, so the slopes share their draws.
            let cfg = smoothing_cfg(o.seed, 20_000, 0.5, g);
            Ok(gamma_combined_loss(&dist, &model, &cfg)?.report)
        })
        .collect()
}

fn exact(o: &VerifyOptions, scope: Scope) -> Result<Vec<BoundReport>, LabError> {
    let grid = BallGrid::new(&o.dist, o.dist.quadrature(EXACT_POINTS), o.ball);
    let o = VerifyOptions { scope, ..o.clone() };
    let per_trial: Vec<Vec<BoundReport>> = (0..o.trials)
        .into_par_iter()
        .map(|t| exact_trial(&o, &grid, t))
        .collect::<Result<_, _>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

fn klce(o: &VerifyOptions) -> Result<Vec<BoundReport>, LabError> {
    (0..o.trials)
        .into_par_iter()
        .map(|t| klce_trial(o, t))
        .collect()
}

/// Every report of `o.scope`, in a fixed order.
pub fn run_verify(o: &VerifyOptions) -> Result<Vec<BoundReport>, LabError> {
    if o.trials < 1 {
        return Err(
            crate::config::ConfigError::Invalid("--trials must be at least 1".into()).into(),
        );
    }
    o.dist.validate()?;
    o.ball.validate()?;
    match o.scope {
        Scope::Thm1 | Scope::Variants | Scope::Equiv | Scope::Cor1 => exact(o, o.scope),
        Scope::Thm4 => theorem4(o),
        Scope::Thm5 => theorem5(o),
        Scope::Gamma => gamma(o),
        Scope::Klce => klce(o),
        Scope::All => {
            let mut v = exact(o, Scope::All)?;
            v.extend(theorem4(o)?);
            v.extend(theorem5(o)?);
            v.extend(gamma(o)?);
            v.extend(klce(o)?);
            Ok(v)
        }
    }
}

/// `passed/total`.
pub fn summary_line(reports: &[BoundReport]) -> String {
    format!(
        "{}/{}",
        reports.iter().filter(|r| r.pass).count(),
        reports.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_names_parse_back() {
        for s in Scope::ALL {
            assert_eq!(s.name().parse::<Scope>().unwrap(), s);
        }
        assert!("thm9".parse::<Scope>().is_err());
        assert_eq!("halve-c".parse::<Fault>().unwrap(), Fault::HalveC);
    }

    #[test]
    fn one_theorem1_trial_gives_two_reports() {
        let r = run_verify(&VerifyOptions::new(Scope::Thm1, 1, 0)).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|b| b.pass));
        assert_eq!(r[0].seed, trial_seed(0, 0));
    }

    #[test]
    fn exact_scopes_report_counts() {
        let count = |s| run_verify(&VerifyOptions::new(s, 4, 2)).unwrap().len();
        assert_eq!(count(Scope::Variants), 4);
        assert_eq!(count(Scope::Equiv), 24);
        assert_eq!(count(Scope::Cor1), 4);
        assert_eq!(count(Scope::Klce), 4);
        assert_eq!(count(Scope::Thm4), 3);
    }

    #[test]
    fn halved_constant_breaks_a_lower_bound() {
        let mut o = VerifyOptions::new(Scope::Thm1, 40, 1);
        o.fault = Some(Fault::HalveC);
        let r = run_verify(&o).unwrap();
        let first = r.iter().find(|b| !b.pass).expect("fault detected");
        assert!(first.name.starts_with("thm1.lower"), "{}", first.name);
    }

    #[test]
    fn trials_must_be_positive() {
        assert_eq!(
            run_verify(&VerifyOptions::new(Scope::Thm1, 0, 0))
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn summary_counts_passes() {
        let r = [
            BoundReport::new("a", 1.0, 2.0, 0.0),
            BoundReport::new("b", 3.0, 2.0, 0.0),
        ];
        assert_eq!(summary_line(&r), "1/2");
    }
}
