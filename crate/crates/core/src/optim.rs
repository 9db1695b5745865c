//! Adam-style gradient ascent with a step-halving safeguard.
//!
//! Accepted iterates never decrease the objective: a proposed Adam step is
//! halved until it improves (or ties) the current value. If no halving helps,
//! the moment estimates are reset once; a second failure from fresh moments
//! ends the run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_halvings: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            max_iters: 500,
            grad_tol: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_halvings: 10,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptOutcome {
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient: Vec<f64>,
    /// Number of Adam iterations performed.
    pub iterations: usize,
    /// True when the gradient-norm criterion was met.
    pub converged: bool,
    /// Objective value at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Maximizes `objective`, which returns the value and its gradient.
///
/// An `Err` from `objective` at a trial point counts as a rejected step; an
/// `Err` at the starting point is returned as is.
pub fn adam_ascent<F>(init: &[f64], cfg: &OptConfig, mut objective: F) -> Result<OptOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut x = init.to_vec();
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() || !all_finite(&g) {
        return Err(Error::NonFiniteObjective {
            iteration: 0,
            last_good: x,
        });
    }
    let n = x.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut t = 0i32;
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if norm(&g) < cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        t += 1;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        let mut step = vec![0.0; n];
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            step[i] = cfg.learning_rate * (m[i] / bias1) / ((v[i] / bias2).sqrt() + cfg.adam_eps);
        }

        let mut scale = 1.0;
        let mut accepted = None;
        let mut saw_finite = false;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + scale * s).collect();
            if let Ok((ft, gt)) = objective(&trial) {
                if ft.is_finite() && all_finite(&gt) {
                    saw_finite = true;
                    if ft >= f {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }

        match accepted {
            Some((xt, ft, gt)) => {
                x = xt;
                f = ft;
                g = gt;
                history.push(f);
            }
            None if t > 1 => {
                m.iter_mut().for_each(|a| *a = 0.0);
                v.iter_mut().for_each(|a| *a = 0.0);
                t = 0;
            }
            None if !saw_finite => {
                return Err(Error::NonFiniteObjective {
                    iteration: iterations,
                    last_good: x,
                });
            }
            None => break,
        }
    }

    Ok(OptOutcome {
        params: x,
        objective: f,
        gradient: g,
        iterations,
        converged,
        history,
    })
}
