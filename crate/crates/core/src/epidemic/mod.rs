//! Controlled SEIR (deterministic) and SIS (stochastic) epidemic models.
//!
//! States are population fractions. Controls are the pair `(u1, u2)`:
//! `u1` scales the effective contact rate by `1 - u1`, `u2` adds an extra
//! recovery flow `u2 * I`.

mod cost;
mod dynamics;
mod objective;

pub use cost::CostFunction;
pub use dynamics::{seir_step, sis_deterministic_step, sis_step, step};
pub use objective::{simulate, window_objective, NoiseBundle, NoisePath, Trajectory};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Seir,
    Sis,
}

impl ModelKind {
    /// Length of the feature vector `(state..., beta)` used by the predictor.
    pub fn feature_len(self) -> usize {
        match self {
            ModelKind::Seir => 5,
            ModelKind::Sis => 3,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Seir => "seir",
            ModelKind::Sis => "sis",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seir" => Ok(ModelKind::Seir),
            "sis" => Ok(ModelKind::Sis),
            other => Err(Error::Input(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl SeirState {
    pub fn new(s: f64, e: f64, i: f64, r: f64) -> Self {
        Self { s, e, i, r }
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.s, self.e, self.i, self.r];
        if parts.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Input(format!("SEIR fractions out of [0,1]: {self:?}")));
        }
        if (self.total() - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!(
                "SEIR fractions sum to {}, not 1",
                self.total()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SisState {
    pub s: f64,
    pub i: f64,
}

impl SisState {
    /// Builds the state from the infected fraction; `S = 1 - I`.
    pub fn from_infected(i: f64) -> Self {
        Self { s: 1.0 - i, i }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s) || !(0.0..=1.0).contains(&self.i) {
            return Err(Error::Input(format!("SIS fractions out of [0,1]: {self:?}")));
        }
        if (self.s + self.i - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "SIS fractions sum to {}, not 1",
                self.s + self.i
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum EpidemicState {
    Seir(SeirState),
    Sis(SisState),
}

impl EpidemicState {
    pub fn kind(&self) -> ModelKind {
        match self {
            EpidemicState::Seir(_) => ModelKind::Seir,
            EpidemicState::Sis(_) => ModelKind::Sis,
        }
    }

    pub fn infected(&self) -> f64 {
        match self {
            EpidemicState::Seir(s) => s.i,
            EpidemicState::Sis(s) => s.i,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EpidemicState::Seir(s) => s.validate(),
            EpidemicState::Sis(s) => s.validate(),
        }
    }

    /// State components in canonical order: `(S, E, I, R)` or `(S, I)`.
    pub fn components(&self) -> Vec<f64> {
        match self {
            EpidemicState::Seir(s) => vec![s.s, s.e, s.i, s.r],
            EpidemicState::Sis(s) => vec![s.s, s.i],
        }
    }

    pub fn from_components(kind: ModelKind, c: &[f64]) -> Result<Self> {
        match (kind, c) {
            (ModelKind::Seir, [s, e, i, r]) => Ok(EpidemicState::Seir(SeirState::new(*s, *e, *i, *r))),
            (ModelKind::Sis, [s, i]) => Ok(EpidemicState::Sis(SisState { s: *s, i: *i })),
            _ => Err(Error::Input(format!(
                "{} state needs {} components, got {}",
                kind,
                kind.feature_len() - 1,
                c.len()
            ))),
        }
    }

    /// Predictor input: state components followed by the contact rate.
    pub fn features(&self, beta: f64) -> Vec<f64> {
        let mut f = self.components();
        f.push(beta);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPair {
    pub u1: f64,
    pub u2: f64,
}

impl ControlPair {
    pub const NULL: ControlPair = ControlPair { u1: 0.0, u2: 0.0 };

    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    pub fn within(&self, lower: f64, upper: f64) -> bool {
        (lower..=upper).contains(&self.u1) && (lower..=upper).contains(&self.u2)
    }
}

/// Splits a concatenated `[u1(0..d), u2(0..d)]` vector into control pairs.
pub fn controls_from_flat(flat: &[f64]) -> Result<Vec<ControlPair>> {
    if !flat.len().is_multiple_of(2) {
        return Err(Error::Input(format!(
            "flat control vector must have even length, got {}",
            flat.len()
        )));
    }
    let d = flat.len() / 2;
    Ok((0..d)
        .map(|t| ControlPair::new(flat[t], flat[d + t]))
        .collect())
}

/// Inverse of [`controls_from_flat`].
pub fn controls_to_flat(controls: &[ControlPair]) -> Vec<f64> {
    controls
        .iter()
        .map(|c| c.u1)
        .chain(controls.iter().map(|c| c.u2))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpidemicParams {
    /// Birth rate, equal to the death rate.
    pub tau: f64,
    /// Natural contact rate.
    pub beta: f64,
    /// E to I transfer rate (SEIR only).
    pub alpha: f64,
    /// Natural recovery rate.
    pub gamma: f64,
    /// Noise intensity on the contact rate (SIS only).
    pub sigma: f64,
    /// Weight on the infected fraction.
    pub c1: f64,
    /// Weight on the control cost.
    pub c2: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    pub t1: usize,
    pub tf: usize,
    pub dt: f64,
    pub cost: CostFunction,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        Self {
            tau: 0.0003,
            beta: 0.25,
            alpha: 0.2,
            gamma: 0.1,
            sigma: 0.05,
            c1: 400.0,
            c2: 100.0,
            u_lower: 0.0,
            u_upper: 1.0,
            t1: 0,
            tf: 100,
            dt: 1.0,
            cost: CostFunction::Ripple,
        }
    }
}

impl EpidemicParams {
    /// Number of control epochs `tf - t1`.
    pub fn horizon(&self) -> usize {
        self.tf - self.t1
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("tau", self.tau),
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("c1", self.c1),
            ("c2", self.c2),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if !(self.u_lower < self.u_upper) {
            return Err(Error::Input("u_lower must be below u_upper".into()));
        }
        if self.t1 >= self.tf {
            return Err(Error::Input("t1 must precede tf".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Input("dt must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let flat = vec![0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let c = controls_from_flat(&flat).unwrap();
        assert_eq!(c[1], ControlPair::new(0.2, 0.8));
        assert_eq!(controls_to_flat(&c), flat);
        assert!(controls_from_flat(&[0.1]).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(SeirState::new(0.4, 0.13, 0.47, 0.0).validate().is_ok());
        assert!(SeirState::new(0.4, 0.13, 0.5, 0.0).validate().is_err());
        assert!(SisState::from_infected(0.4).validate().is_ok());
        assert!(SisState { s: 0.7, i: 0.4 }.validate().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(EpidemicParams::default().validate().is_ok());
        let mut p = EpidemicParams::default();
        p.tf = 0;
        assert!(p.validate().is_err());
        let mut p = EpidemicParams::default();
        p.gamma = -1.0;
        assert!(p.validate().is_err());
    }
}
