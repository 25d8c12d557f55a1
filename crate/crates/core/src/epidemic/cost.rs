use super::ControlPair;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Per-epoch control cost `f(u1, u2, t)`, selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostFunction {
    /// `u1^2 + u2^2 + 0.3 (1 - cos(3 pi u1) cos(3 pi u2))`: smooth,
    /// nonnegative, zero only at the origin, and non-convex.
    #[default]
    Ripple,
    /// `u1^2 + u2^2`.
    Quadratic,
}

impl CostFunction {
    pub const ALL: [CostFunction; 2] = [CostFunction::Ripple, CostFunction::Quadratic];

    pub fn name(self) -> &'static str {
        match self {
            CostFunction::Ripple => "ripple",
            CostFunction::Quadratic => "quadratic",
        }
    }

    pub fn eval(self, ctrl: ControlPair, _epoch: usize) -> f64 {
        let quad = ctrl.u1 * ctrl.u1 + ctrl.u2 * ctrl.u2;
        match self {
            CostFunction::Ripple => {
                quad + 0.3 * (1.0 - (3.0 * PI * ctrl.u1).cos() * (3.0 * PI * ctrl.u2).cos())
            }
            CostFunction::Quadratic => quad,
        }
    }
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostFunction::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Input(format!("unknown cost function `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ripple(u1: f64, u2: f64) -> f64 {
        CostFunction::Ripple.eval(ControlPair::new(u1, u2), 0)
    }

    #[test]
    fn ripple_reference_values() {
        assert_eq!(ripple(0.0, 0.0), 0.0);
        assert!((ripple(1.0, 1.0) - 2.0).abs() < 1e-12);
        // cos(pi)^2 = 1, so the ripple term vanishes: 2/9.
        assert!((ripple(1.0 / 3.0, 1.0 / 3.0) - 0.222_222_222_222_222_2).abs() < 1e-12);
    }

    #[test]
    fn ripple_is_nonconvex() {
        // Midpoint convexity fails somewhere along the u1 axis.
        let violated = (0..100).any(|k| {
            let a = k as f64 / 100.0;
            let b = (a + 0.2).min(1.0);
            ripple((a + b) / 2.0, 0.0) > (ripple(a, 0.0) + ripple(b, 0.0)) / 2.0 + 1e-9
        });
        assert!(violated);
    }

    #[test]
    fn ripple_nonnegative_on_grid() {
        for i in 0..=50 {
            for j in 0..=50 {
                assert!(ripple(i as f64 / 50.0, j as f64 / 50.0) >= 0.0);
            }
        }
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!("ripple".parse::<CostFunction>().unwrap(), CostFunction::Ripple);
        assert_eq!("quadratic".parse::<CostFunction>().unwrap(), CostFunction::Quadratic);
        assert!("cubic".parse::<CostFunction>().is_err());
    }
}
