use super::{step, ControlPair, EpidemicParams, EpidemicState};
use crate::error::{Error, Result};
use crate::rng;
use rand_distr::{Distribution, Normal};
use std::fmt::Write as _;

/// Brownian increments `dB ~ N(0, dt)`, one per epoch, regenerable from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn generate(seed: u64, len: usize, dt: f64) -> Self {
        let normal = Normal::new(0.0, dt.sqrt()).expect("dt > 0");
        let mut r = rng::seeded(seed);
        Self {
            seed,
            increments: (0..len).map(|_| normal.sample(&mut r)).collect(),
        }
    }

    /// All-zero increments; turns the SIS model deterministic.
    pub fn zeros(len: usize) -> Self {
        Self {
            seed: 0,
            increments: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// A fixed set of noise paths shared by every control evaluated against it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub paths: Vec<NoisePath>,
}

impl NoiseBundle {
    pub fn generate(seed: u64, replications: usize, len: usize, dt: f64) -> Self {
        Self {
            paths: (0..replications as u64)
                .map(|k| NoisePath::generate(rng::derive_seed(seed, k), len, dt))
                .collect(),
        }
    }

    pub fn replications(&self) -> usize {
        self.paths.len()
    }
}

/// A simulated run: `states[t]` is the state at the start of epoch `t`;
/// `states` has one more entry than `controls`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EpidemicState>,
    pub controls: Vec<ControlPair>,
    pub instantaneous_cost: Vec<f64>,
    pub cumulative_cost: Vec<f64>,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.cumulative_cost.last().copied().unwrap_or(0.0)
    }

    /// CSV with columns `epoch,S,E,I,R,u1,u2,instantaneous_cost,cumulative_cost`
    /// (SIS omits E and R). `first_epoch` offsets the epoch column.
    pub fn to_csv(&self, first_epoch: usize) -> String {
        let seir = matches!(self.states.first(), Some(EpidemicState::Seir(_)));
        let mut out = String::new();
        if seir {
            out.push_str("epoch,S,E,I,R,u1,u2,instantaneous_cost,cumulative_cost\n");
        } else {
            out.push_str("epoch,S,I,u1,u2,instantaneous_cost,cumulative_cost\n");
        }
        for (t, c) in self.controls.iter().enumerate() {
            let _ = write!(out, "{}", first_epoch + t);
            for v in self.states[t].components() {
                let _ = write!(out, ",{}", crate::fmt_f64(v));
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                crate::fmt_f64(c.u1),
                crate::fmt_f64(c.u2),
                crate::fmt_f64(self.instantaneous_cost[t]),
                crate::fmt_f64(self.cumulative_cost[t])
            );
        }
        out
    }
}

fn check_controls(controls: &[ControlPair], p: &EpidemicParams) -> Result<()> {
    for (t, c) in controls.iter().enumerate() {
        if !c.within(p.u_lower, p.u_upper) {
            return Err(Error::Input(format!(
                "control {c:?} at offset {t} outside [{}, {}]",
                p.u_lower, p.u_upper
            )));
        }
    }
    Ok(())
}

/// Simulates `controls.len()` epochs from `initial`. For SIS, `noise` supplies
/// one increment per epoch (missing noise means `dB = 0`). Costs use the
/// left-rectangle rule: epoch `t` contributes `(C1 I(t) + C2 f(u(t), t)) dt`.
pub fn simulate(
    initial: EpidemicState,
    controls: &[ControlPair],
    p: &EpidemicParams,
    noise: Option<&[f64]>,
    first_epoch: usize,
) -> Result<Trajectory> {
    check_controls(controls, p)?;
    if let Some(n) = noise {
        if n.len() < controls.len() {
            return Err(Error::Input(format!(
                "noise path has {} increments, need {}",
                n.len(),
                controls.len()
            )));
        }
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut inst = Vec::with_capacity(controls.len());
    let mut cum = Vec::with_capacity(controls.len());
    let mut state = initial;
    let mut running = 0.0;
    states.push(state);
    for (t, c) in controls.iter().enumerate() {
        let cost = (p.c1 * state.infected() + p.c2 * p.cost.eval(*c, first_epoch + t)) * p.dt;
        running += cost;
        inst.push(cost);
        cum.push(running);
        let db = noise.map_or(0.0, |n| n[t]);
        state = step(state, *c, p, db);
        states.push(state);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
        instantaneous_cost: inst,
        cumulative_cost: cum,
    })
}

fn rollout_cost(
    initial: EpidemicState,
    controls: &[ControlPair],
    p: &EpidemicParams,
    noise: &[f64],
) -> f64 {
    let mut state = initial;
    let mut total = 0.0;
    for (t, c) in controls.iter().enumerate() {
        total += (p.c1 * state.infected() + p.c2 * p.cost.eval(*c, t)) * p.dt;
        state = step(state, *c, p, noise[t]);
    }
    total
}

/// Cost `V` of applying `controls` from `initial`. For the stochastic model
/// the result is the mean over the bundle's paths, summed in path order.
pub fn window_objective(
    initial: EpidemicState,
    controls: &[ControlPair],
    p: &EpidemicParams,
    noise: Option<&NoiseBundle>,
) -> Result<f64> {
    check_controls(controls, p)?;
    match (initial, noise) {
        (EpidemicState::Seir(_), _) => {
            let zeros = vec![0.0; controls.len()];
            Ok(rollout_cost(initial, controls, p, &zeros))
        }
        (EpidemicState::Sis(_), None) => Err(Error::Input(
            "the stochastic model needs a noise bundle".into(),
        )),
        (EpidemicState::Sis(_), Some(bundle)) => {
            if bundle.paths.is_empty() {
                return Err(Error::Input("noise bundle has no paths".into()));
            }
            let mut sum = 0.0;
            for path in &bundle.paths {
                if path.len() < controls.len() {
                    return Err(Error::Input("noise path shorter than window".into()));
                }
                sum += rollout_cost(initial, controls, p, &path.increments);
            }
            Ok(sum / bundle.paths.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::{SeirState, SisState};

    fn seir(s: f64, e: f64, i: f64, r: f64) -> EpidemicState {
        EpidemicState::Seir(SeirState::new(s, e, i, r))
    }

    #[test]
    fn zero_control_cost_is_pure_epidemic() {
        let p = EpidemicParams::default();
        let init = seir(0.5, 0.3, 0.2, 0.0);
        let ctrls = vec![ControlPair::NULL; 6];
        let v = window_objective(init, &ctrls, &p, None).unwrap();
        let traj = simulate(init, &ctrls, &p, None, 0).unwrap();
        let expected: f64 = traj.states[..6].iter().map(|s| p.c1 * s.infected() * p.dt).sum();
        assert!((v - expected).abs() < 1e-9);
        assert!((traj.total_cost() - v).abs() < 1e-9);
    }

    #[test]
    fn disease_free_costs_nothing() {
        let p = EpidemicParams::default();
        let v = window_objective(seir(0.9, 0.0, 0.0, 0.1), &[ControlPair::NULL; 10], &p, None);
        assert_eq!(v.unwrap(), 0.0);
    }

    #[test]
    fn out_of_bounds_controls_rejected() {
        let p = EpidemicParams::default();
        let bad = [ControlPair::new(1.2, 0.0)];
        assert!(window_objective(seir(0.5, 0.3, 0.2, 0.0), &bad, &p, None).is_err());
    }

    #[test]
    fn stochastic_objective_is_reproducible() {
        let p = EpidemicParams::default();
        let init = EpidemicState::Sis(SisState::from_infected(0.4));
        let ctrls = vec![ControlPair::new(0.2, 0.5); 8];
        let a = window_objective(init, &ctrls, &p, Some(&NoiseBundle::generate(5, 1, 8, p.dt)));
        let b = window_objective(init, &ctrls, &p, Some(&NoiseBundle::generate(5, 1, 8, p.dt)));
        assert_eq!(a.unwrap(), b.unwrap());
        assert!(window_objective(init, &ctrls, &p, None).is_err());
    }

    #[test]
    fn stochastic_objective_averages_paths() {
        let p = EpidemicParams::default();
        let init = EpidemicState::Sis(SisState::from_infected(0.4));
        let ctrls = vec![ControlPair::new(0.1, 0.1); 5];
        let bundle = NoiseBundle::generate(9, 4, 5, p.dt);
        let mean = window_objective(init, &ctrls, &p, Some(&bundle)).unwrap();
        let by_hand: f64 = bundle
            .paths
            .iter()
            .map(|path| simulate(init, &ctrls, &p, Some(&path.increments), 0).unwrap().total_cost())
            .sum::<f64>()
            / 4.0;
        assert!((mean - by_hand).abs() < 1e-9);
    }

    #[test]
    fn trajectory_csv_shape() {
        let p = EpidemicParams::default();
        let t = simulate(seir(0.5, 0.3, 0.2, 0.0), &[ControlPair::NULL; 3], &p, None, 10).unwrap();
        let csv = t.to_csv(10);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("10,"));
        assert_eq!(lines[1].split(',').count(), 9);
        let sis = simulate(
            EpidemicState::Sis(SisState::from_infected(0.3)),
            &[ControlPair::NULL; 2],
            &p,
            Some(&[0.0, 0.0]),
            0,
        )
        .unwrap();
        assert_eq!(sis.to_csv(0).lines().nth(1).unwrap().split(',').count(), 7);
    }
}
