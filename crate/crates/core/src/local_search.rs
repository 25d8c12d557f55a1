//! Projected Adam descent on a black-box objective, with finite-difference
//! gradients. Used to polish the Bayesian-optimization incumbent.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    /// Stop once the projected gradient's infinity norm drops below this.
    pub tolerance: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iters: 2000,
            fd_step: 1e-4,
            tolerance: 1e-6,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.fd_step > 0.0
            && self.tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid Adam config: {self:?}")))
        }
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("objective returned {v}")))
    }
}

/// Finite-difference gradient. Central differences in the interior; a
/// coordinate within `h` of a bound uses the one-sided difference pointing
/// into the box, reusing `f_u = f(u)` when given. Returns the gradient and
/// the number of objective calls made.
pub fn finite_diff_grad<F>(
    f: &mut F,
    u: &[f64],
    f_u: Option<f64>,
    h: f64,
    bounds: (f64, f64),
) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let (lower, upper) = bounds;
    let mut calls = 0;
    let mut centre = f_u;
    let mut x = u.to_vec();
    let mut grad = Vec::with_capacity(u.len());
    for j in 0..u.len() {
        let up_ok = u[j] + h <= upper;
        let down_ok = u[j] - h >= lower;
        let g = if up_ok && down_ok {
            x[j] = u[j] + h;
            let fp = finite(f(&x)?)?;
            x[j] = u[j] - h;
            let fm = finite(f(&x)?)?;
            calls += 2;
            (fp - fm) / (2.0 * h)
        } else {
            let fc = match centre {
                Some(v) => v,
                None => {
                    calls += 1;
                    let v = finite(f(u)?)?;
                    centre = Some(v);
                    v
                }
            };
            if up_ok {
                x[j] = u[j] + h;
                calls += 1;
                (finite(f(&x)?)? - fc) / h
            } else if down_ok {
                x[j] = u[j] - h;
                calls += 1;
                (fc - finite(f(&x)?)?) / h
            } else {
                0.0
            }
        };
        x[j] = u[j];
        grad.push(g);
    }
    Ok((grad, calls))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamOutcome {
    /// Best iterate seen, including the start point.
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Set when the run stopped early on a failed or non-finite evaluation.
    pub warning: Option<Error>,
}

fn projected_inf_norm(u: &[f64], g: &[f64], bounds: (f64, f64)) -> f64 {
    u.iter()
        .zip(g)
        .map(|(&x, &gj)| {
            let blocked = (x <= bounds.0 && gj > 0.0) || (x >= bounds.1 && gj < 0.0);
            if blocked {
                0.0
            } else {
                gj.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Bias-corrected Adam with coordinatewise projection onto `bounds` after
/// every step. The returned value never exceeds `f(u0)`.
pub fn adam_descend<F>(mut f: F, u0: &[f64], cfg: &AdamConfig, bounds: (f64, f64)) -> Result<AdamOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    if u0.iter().any(|x| !(bounds.0..=bounds.1).contains(x)) {
        return Err(Error::Input("Adam start point outside bounds".into()));
    }
    let calls = std::cell::Cell::new(0usize);
    let mut f = |x: &[f64]| {
        calls.set(calls.get() + 1);
        f(x)
    };
    let start = finite(f(u0)?)?;
    let mut best_point = u0.to_vec();
    let mut best_value = start;

    let n = u0.len();
    let mut u = u0.to_vec();
    let mut value = start;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    let mut warning = None;

    while iterations < cfg.max_iters {
        let grad = match finite_diff_grad(&mut f, &u, Some(value), cfg.fd_step, bounds) {
            Ok((g, _)) => g,
            Err(e) => {
                warning = Some(e);
                break;
            }
        };
        if projected_inf_norm(&u, &grad, bounds) < cfg.tolerance {
            break;
        }
        iterations += 1;
        let t = iterations as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for j in 0..n {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
            let step = cfg.step_size * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.epsilon);
            u[j] = (u[j] - step).clamp(bounds.0, bounds.1);
        }
        match f(&u).and_then(finite) {
            Ok(val) => {
                value = val;
                if val < best_value {
                    best_value = val;
                    best_point.clone_from(&u);
                }
            }
            Err(e) => {
                warning = Some(e);
                break;
            }
        }
    }

    Ok(AdamOutcome {
        point: best_point,
        value: best_value,
        iterations,
        evaluations: calls.get(),
        warning,
    })
}
