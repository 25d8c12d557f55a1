//! Full-horizon rollouts of competing control policies on one setting and
//! their cost comparison.

use crate::bo::BoConfig;
use crate::data::{collect_trajectory, receding_controls, InitialSetting, NoiseConfig};
use crate::epidemic::{simulate, step, ControlPair, EpidemicParams, EpidemicState, Trajectory};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::rnn::RnnModel;
use std::fmt;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Predicted,
    Transplanted,
    BoReal,
    Null,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Provenance::Predicted => "predicted",
            Provenance::Transplanted => "transplanted",
            Provenance::BoReal => "bo_real",
            Provenance::Null => "null",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRollout {
    pub label: String,
    pub provenance: Provenance,
    pub trajectory: Trajectory,
}

impl PolicyRollout {
    pub fn controls(&self) -> &[ControlPair] {
        &self.trajectory.controls
    }

    pub fn total_cost(&self) -> f64 {
        self.trajectory.total_cost()
    }

    pub fn final_infected(&self) -> f64 {
        self.trajectory.states.last().map_or(0.0, EpidemicState::infected)
    }
}

fn horizon_noise<'a>(setting: &InitialSetting, noise: Option<&'a [f64]>, horizon: usize) -> Result<Option<&'a [f64]>> {
    match (setting.state, noise) {
        (EpidemicState::Sis(_), None) => Err(Error::Input("stochastic rollouts need a shared noise path".into())),
        (_, Some(n)) if n.len() < horizon => Err(Error::Input(format!(
            "noise path has {} increments, horizon is {horizon}",
            n.len()
        ))),
        (EpidemicState::Seir(_), _) => Ok(None),
        (EpidemicState::Sis(_), n) => Ok(n),
    }
}

/// Closed loop: predict a control from the current state, apply it, step.
pub fn predict_rollout(
    model: &mut RnnModel,
    setting: &InitialSetting,
    p: &EpidemicParams,
    noise: Option<&[f64]>,
) -> Result<PolicyRollout> {
    if model.model != setting.kind() {
        return Err(Error::Input(format!(
            "checkpoint was trained on the {} model, setting is {}",
            model.model,
            setting.kind()
        )));
    }
    setting.validate()?;
    let p = p.with_beta(setting.beta);
    let horizon = p.horizon();
    let noise = horizon_noise(setting, noise, horizon)?;
    model.reset();
    let mut state = setting.state;
    let mut controls = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let c = model.forward(&state.features(setting.beta))?;
        state = step(state, c, &p, noise.map_or(0.0, |n| n[t]));
        controls.push(c);
    }
    Ok(PolicyRollout {
        label: "predicted".into(),
        provenance: Provenance::Predicted,
        trajectory: simulate(setting.state, &controls, &p, noise, 0)?,
    })
}

/// Applies a fixed control sequence (typically computed for another setting).
pub fn transplant_rollout(
    label: impl Into<String>,
    controls: &[ControlPair],
    setting: &InitialSetting,
    p: &EpidemicParams,
    noise: Option<&[f64]>,
) -> Result<PolicyRollout> {
    fixed_rollout(label.into(), Provenance::Transplanted, controls, setting, p, noise)
}

pub fn null_rollout(setting: &InitialSetting, p: &EpidemicParams, noise: Option<&[f64]>) -> Result<PolicyRollout> {
    let controls = vec![ControlPair::new(p.u_lower, p.u_lower); p.horizon()];
    fixed_rollout("null".into(), Provenance::Null, &controls, setting, p, noise)
}

pub fn fixed_rollout(
    label: String,
    provenance: Provenance,
    controls: &[ControlPair],
    setting: &InitialSetting,
    p: &EpidemicParams,
    noise: Option<&[f64]>,
) -> Result<PolicyRollout> {
    setting.validate()?;
    let p = p.with_beta(setting.beta);
    if controls.len() != p.horizon() {
        return Err(Error::Dimension {
            expected: p.horizon(),
            got: controls.len(),
        });
    }
    let noise = horizon_noise(setting, noise, p.horizon())?;
    Ok(PolicyRollout {
        label,
        provenance,
        trajectory: simulate(setting.state, controls, &p, noise, 0)?,
    })
}

/// Receding-horizon BO control for `setting`: the windowed collection run,
/// keeping each window's first control and the tail of the last window.
pub fn real_optimal_control(
    setting: &InitialSetting,
    p: &EpidemicParams,
    bo: &BoConfig,
    noise: &NoiseConfig,
) -> Result<Vec<ControlPair>> {
    let pairs = collect_trajectory(setting, p, bo, noise)?;
    receding_controls(&pairs, bo.window_dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub label: String,
    pub provenance: Provenance,
    pub total_cost: f64,
    pub final_infected: f64,
    /// `total_cost / null total`, when a null policy is present.
    pub ratio_vs_null: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rollouts: Vec<PolicyRollout>,
    pub summary: Vec<PolicySummary>,
}

impl Comparison {
    /// Per-epoch series `epoch,policy,cumulative_cost,I`; epoch `t` carries
    /// the cost accumulated over epochs `0..=t` and the infected fraction
    /// reached after the step.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("epoch,policy,cumulative_cost,I\n");
        for r in &self.rollouts {
            for (t, c) in r.trajectory.cumulative_cost.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{t},{},{},{}",
                    r.label,
                    fmt_f64(*c),
                    fmt_f64(r.trajectory.states[t + 1].infected())
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("policy,provenance,total_cost,final_I,ratio_vs_null\n");
        for s in &self.summary {
            let ratio = s.ratio_vs_null.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{ratio}",
                s.label,
                s.provenance,
                fmt_f64(s.total_cost),
                fmt_f64(s.final_infected)
            );
        }
        out
    }

    pub fn get(&self, label: &str) -> Option<&PolicySummary> {
        self.summary.iter().find(|s| s.label == label)
    }
}

/// Tabulates rollouts that share one setting and horizon.
pub fn compare_policies(rollouts: Vec<PolicyRollout>) -> Result<Comparison> {
    let first = rollouts.first().ok_or_else(|| Error::Input("nothing to compare".into()))?;
    let start = first.trajectory.states[0];
    let len = first.trajectory.controls.len();
    for r in &rollouts {
        if r.trajectory.states[0] != start || r.trajectory.controls.len() != len {
            return Err(Error::Input(format!(
                "policy `{}` was rolled out on a different setting",
                r.label
            )));
        }
    }
    let null_total = rollouts
        .iter()
        .find(|r| r.provenance == Provenance::Null)
        .map(PolicyRollout::total_cost);
    let summary = rollouts
        .iter()
        .map(|r| PolicySummary {
            label: r.label.clone(),
            provenance: r.provenance,
            total_cost: r.total_cost(),
            final_infected: r.final_infected(),
            ratio_vs_null: null_total.filter(|n| *n > 0.0).map(|n| r.total_cost() / n),
        })
        .collect();
    Ok(Comparison { rollouts, summary })
}
