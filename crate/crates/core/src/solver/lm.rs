use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub max_iterations: usize,
    /// Stop once a step is shorter than this (parameter units).
    pub step_tolerance: f64,
    /// Stop once an accepted step lowers the cost by less than this.
    pub cost_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            max_iterations: 100,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_damping > 0.0
            && self.damping_factor > 1.0
            && self.max_iterations > 0
            && self.step_tolerance > 0.0
            && self.cost_tolerance >= 0.0)
        {
            return Err(Error::Config(format!("invalid LM settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSolution<const P: usize> {
    pub x: SVector<f64, P>,
    /// Half the squared residual norm.
    pub cost: f64,
    pub iterations: usize,
}

/// Marquardt-scaled Levenberg-Marquardt for small dense problems.
///
/// `eval` returns the residual and Jacobian, or an error for points outside
/// the model domain; such trial points are treated as rejected steps.
pub fn levenberg_marquardt<const M: usize, const P: usize, F>(
    mut eval: F,
    x0: SVector<f64, P>,
    cfg: &LmConfig,
) -> Result<LmSolution<P>>
where
    F: FnMut(&SVector<f64, P>) -> Result<(SVector<f64, M>, SMatrix<f64, M, P>)>,
{
    let mut x = x0;
    let (mut r, mut j) = eval(&x)?;
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = cfg.initial_damping;

    for iter in 1..=cfg.max_iterations {
        let jtj = j.transpose() * j;
        let g = j.transpose() * r;
        let diag_floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;
        let mut a = jtj;
        for k in 0..P {
            a[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
        }
        let Some(chol) = a.cholesky() else {
            lambda *= cfg.damping_factor;
            continue;
        };
        let step = -chol.solve(&g);
        if !step.iter().all(|v| v.is_finite()) {
            lambda *= cfg.damping_factor;
            continue;
        }
        if step.norm() < cfg.step_tolerance {
            return Ok(LmSolution {
                x,
                cost,
                iterations: iter,
            });
        }
        let trial = x + step;
        match eval(&trial) {
            Ok((rt, jt)) => {
                let trial_cost = 0.5 * rt.norm_squared();
                if trial_cost < cost {
                    let improvement = cost - trial_cost;
                    x = trial;
                    r = rt;
                    j = jt;
                    cost = trial_cost;
                    lambda = (lambda / cfg.damping_factor).max(1e-15);
                    if improvement < cfg.cost_tolerance {
                        return Ok(LmSolution {
                            x,
                            cost,
                            iterations: iter,
                        });
                    }
                } else {
                    lambda *= cfg.damping_factor;
                }
            }
            Err(Error::Domain { .. }) => lambda *= cfg.damping_factor,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Vector2};

    #[test]
    fn rosenbrock() {
        let eval = |x: &Vector2<f64>| -> Result<(Vector2<f64>, Matrix2<f64>)> {
            let r = Vector2::new(10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]);
            let j = Matrix2::new(-20.0 * x[0], 10.0, -1.0, 0.0);
            Ok((r, j))
        };
        let sol = levenberg_marquardt(eval, Vector2::new(-1.2, 1.0), &LmConfig::default()).unwrap();
        assert!((sol.x - Vector2::new(1.0, 1.0)).norm() < 1e-6);
    }

    #[test]
    fn linear_problem_in_few_iterations() {
        let eval = |x: &Vector2<f64>| -> Result<(SVector<f64, 3>, SMatrix<f64, 3, 2>)> {
            let j = SMatrix::<f64, 3, 2>::new(1.0, 0.0, 0.0, 1.0, 1.0, 1.0);
            let b = SVector::<f64, 3>::new(1.0, 2.0, 3.0);
            Ok((j * x - b, j))
        };
        let sol = levenberg_marquardt(eval, Vector2::zeros(), &LmConfig::default()).unwrap();
        assert!((sol.x - Vector2::new(1.0, 2.0)).norm() < 1e-8);
        assert!(sol.iterations < 10);
    }

    #[test]
    fn exhausted_budget_reports_no_convergence() {
        let eval = |x: &Vector2<f64>| -> Result<(Vector2<f64>, Matrix2<f64>)> {
            let r = Vector2::new(10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]);
            let j = Matrix2::new(-20.0 * x[0], 10.0, -1.0, 0.0);
            Ok((r, j))
        };
        let cfg = LmConfig {
            max_iterations: 2,
            ..LmConfig::default()
        };
        let err = levenberg_marquardt(eval, Vector2::new(-1.2, 1.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2 }));
    }
}
