use alloc::vec;
use alloc::vec::Vec;

use libm::{pow, sqrt};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    SgdMomentum,
}

/// First-order update rule with its running state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
    SgdMomentum {
        lr: f64,
        momentum: f64,
        velocity: Vec<f64>,
    },
}

impl Optimizer {
    pub fn adam(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self::Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn sgd_momentum(n: usize, lr: f64, momentum: f64) -> Self {
        Self::SgdMomentum {
            lr,
            momentum,
            velocity: vec![0.0; n],
        }
    }

    /// Apply one descent step to `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Self::Adam {
                lr,
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - pow(*beta1, *t as f64);
                let c2 = 1.0 - pow(*beta2, *t as f64);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / (sqrt(v[i] / c2) + *eps);
                }
            }
            Self::SgdMomentum {
                lr,
                momentum,
                velocity,
            } => {
                for i in 0..params.len() {
                    velocity[i] = *momentum * velocity[i] + grad[i];
                    params[i] -= *lr * velocity[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut opt = Optimizer::adam(2, 0.1, 0.9, 0.999, 1e-12);
        let mut p = [1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.02]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = Optimizer::sgd_momentum(1, 0.5, 0.9);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0]);
        opt.step(&mut p, &[1.0]);
        // v1 = 1, v2 = 1.9
        assert!((p[0] + 0.5 * (1.0 + 1.9)).abs() < 1e-15);
    }

    #[test]
    fn both_minimize_a_quadratic() {
        for mut opt in [
            Optimizer::adam(2, 0.05, 0.9, 0.999, 1e-8),
            Optimizer::sgd_momentum(2, 0.05, 0.9),
        ] {
            let mut p = [3.0, -2.0];
            for _ in 0..2000 {
                let g = [2.0 * p[0], 8.0 * p[1]];
                opt.step(&mut p, &g);
            }
            assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3, "{p:?}");
        }
    }
}
