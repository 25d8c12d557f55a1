//! Sliding-window training-data collection and the dataset file format.
//!
//! For one initial setting, window `i` starts from the state reached at
//! epoch `i`, solves the `d`-epoch control problem with BO, rolls the model
//! forward under the optimized controls and records `d` (state, control)
//! pairs. The state after the window's first step seeds window `i + 1`, so a
//! horizon of `D` epochs yields `D - d + 1` windows and `d (D - d + 1)` pairs.

use crate::bo::{optimize_window, BoConfig};
use crate::epidemic::{
    simulate, window_objective, ControlPair, EpidemicParams, EpidemicState, ModelKind, NoiseBundle,
    NoisePath, SeirState, SisState,
};
use crate::error::{Error, Result};
use crate::{fmt_f64, rng};
use rand::Rng as _;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;
const COLUMNS: &str = "label,window,epoch,S,E,I,R,beta,u1,u2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSetting {
    pub label: String,
    pub state: EpidemicState,
    pub beta: f64,
}

impl InitialSetting {
    pub fn new(label: impl Into<String>, state: EpidemicState, beta: f64) -> Self {
        Self {
            label: label.into(),
            state,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() || self.label.contains([',', '\n', '\r']) || self.label.starts_with('#') {
            return Err(Error::Input(format!("invalid setting label `{}`", self.label)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Input(format!("beta must be positive, got {}", self.beta)));
        }
        self.state.validate()
    }

    pub fn kind(&self) -> ModelKind {
        self.state.kind()
    }

    /// Stable per-label stream index for seed derivation.
    pub fn stream_id(&self) -> u64 {
        self.label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

fn seir(s: f64, e: f64, i: f64, r: f64) -> EpidemicState {
    EpidemicState::Seir(SeirState::new(s, e, i, r))
}

/// The five reference starting states used for transplant comparisons, all
/// with `R = 0`. For SIS only the infected fraction is kept.
pub fn reference_settings(kind: ModelKind, beta: f64) -> Vec<InitialSetting> {
    let states = [
        (0.4, 0.13, 0.47),
        (0.8, 0.0, 0.2),
        (0.6, 0.03, 0.37),
        (0.3, 0.3, 0.4),
        (0.5, 0.2, 0.3),
    ];
    states
        .iter()
        .enumerate()
        .map(|(k, &(s, e, i))| {
            let state = match kind {
                ModelKind::Seir => seir(s, e, i, 0.0),
                ModelKind::Sis => EpidemicState::Sis(SisState::from_infected(i)),
            };
            InitialSetting::new(format!("control{}", k + 1), state, beta)
        })
        .collect()
}

/// The held-out starting state `(0.5, 0.3, 0.2, 0)` (SIS: `I = 0.2`).
pub fn holdout_setting(kind: ModelKind, beta: f64) -> InitialSetting {
    let state = match kind {
        ModelKind::Seir => seir(0.5, 0.3, 0.2, 0.0),
        ModelKind::Sis => EpidemicState::Sis(SisState::from_infected(0.2)),
    };
    InitialSetting::new("holdout", state, beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SettingsPlan {
    Explicit { settings: Vec<InitialSetting> },
    /// The five reference starting states, once per contact rate.
    Reference { model: ModelKind, betas: Vec<f64> },
    /// States drawn uniformly from the simplex with `R = 0`; `beta` cycles
    /// through `betas` uniformly at random.
    Random {
        model: ModelKind,
        count: usize,
        seed: u64,
        betas: Vec<f64>,
    },
}

pub fn vary_settings(plan: &SettingsPlan) -> Result<Vec<InitialSetting>> {
    let settings = match plan {
        SettingsPlan::Explicit { settings } => settings.clone(),
        SettingsPlan::Reference { model, betas } => {
            let tagged = betas.len() > 1;
            betas
                .iter()
                .flat_map(|&beta| {
                    reference_settings(*model, beta).into_iter().map(move |mut s| {
                        if tagged {
                            s.label = format!("{}@{beta}", s.label);
                        }
                        s
                    })
                })
                .collect()
        }
        SettingsPlan::Random {
            model,
            count,
            seed,
            betas,
        } => {
            if betas.is_empty() {
                return Err(Error::Input("random settings plan needs at least one beta".into()));
            }
            let mut r = rng::seeded(*seed);
            (0..*count)
                .map(|k| {
                    let state = match model {
                        ModelKind::Seir => {
                            let [s, e, i] = Dirichlet::new([1.0; 3]).expect("valid alpha").sample(&mut r);
                            seir(s, e, i, 0.0)
                        }
                        ModelKind::Sis => EpidemicState::Sis(SisState::from_infected(r.random::<f64>())),
                    };
                    let beta = betas[r.random_range(0..betas.len())];
                    InitialSetting::new(format!("random{k}"), state, beta)
                })
                .collect()
        }
    };
    if settings.is_empty() {
        return Err(Error::Input("settings plan is empty".into()));
    }
    for s in &settings {
        s.validate()?;
    }
    Ok(settings)
}

/// Noise handling for the stochastic model: each window is optimized
/// against the mean over `replications` fresh paths, while the recorded
/// trajectory follows one realization path per setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub replications: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            replications: 8,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// The realization path a setting's stochastic trajectory follows.
    pub fn realization(&self, setting: &InitialSetting, len: usize, dt: f64) -> NoisePath {
        NoisePath::generate(rng::derive_seed(self.seed, setting.stream_id()), len, dt)
    }

    fn window_bundle(&self, setting: &InitialSetting, window: usize, len: usize, dt: f64) -> NoiseBundle {
        let base = rng::derive_seed(rng::derive_seed(self.seed ^ 0x5eed, setting.stream_id()), window as u64);
        NoiseBundle::generate(base, self.replications.max(1), len, dt)
    }
}

/// Maps a unit-cube BO point `[u1(0..d), u2(0..d)]` onto control bounds.
pub fn unit_to_controls(x: &[f64], p: &EpidemicParams) -> Result<Vec<ControlPair>> {
    let scale = |v: f64| (p.u_lower + v * (p.u_upper - p.u_lower)).clamp(p.u_lower, p.u_upper);
    Ok(crate::epidemic::controls_from_flat(x)?
        .into_iter()
        .map(|c| ControlPair::new(scale(c.u1), scale(c.u2)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub label: String,
    pub window: usize,
    pub epoch: usize,
    pub state: EpidemicState,
    pub beta: f64,
    pub control: ControlPair,
}

impl TrainingPair {
    /// Predictor input `(S, E, I, R, beta)` or `(S, I, beta)`.
    pub fn input(&self) -> Vec<f64> {
        self.state.features(self.beta)
    }
}

/// Optimizes one window from `start` at absolute epoch `epoch0` and returns
/// the optimized controls.
pub fn optimize_window_controls(
    setting: &InitialSetting,
    start: EpidemicState,
    window: usize,
    p: &EpidemicParams,
    bo: &BoConfig,
    noise: &NoiseConfig,
) -> Result<Vec<ControlPair>> {
    let d = bo.window_dim;
    let bundle = match start {
        EpidemicState::Sis(_) => Some(noise.window_bundle(setting, window, d, p.dt)),
        EpidemicState::Seir(_) => None,
    };
    let cfg = bo.with_seed(rng::derive_seed(rng::derive_seed(bo.seed, setting.stream_id()), window as u64));
    let objective = |x: &[f64]| window_objective(start, &unit_to_controls(x, p)?, p, bundle.as_ref());
    let result = optimize_window(objective, 2, &cfg)
        .map_err(|e| Error::Numerical(format!("window {window} of `{}`: {e}", setting.label)))?;
    if let Some(e) = result.failure {
        return Err(Error::Numerical(format!("window {window} of `{}`: {e}", setting.label)));
    }
    unit_to_controls(&result.best_point, p)
}

/// Runs the sliding-window collection for one setting.
pub fn collect_trajectory(
    setting: &InitialSetting,
    p: &EpidemicParams,
    bo: &BoConfig,
    noise: &NoiseConfig,
) -> Result<Vec<TrainingPair>> {
    setting.validate()?;
    let p = p.with_beta(setting.beta);
    p.validate()?;
    let horizon = p.horizon();
    let d = bo.window_dim;
    if d == 0 || d > horizon {
        return Err(Error::Input(format!("window {d} must lie in 1..={horizon}")));
    }
    let realization = match setting.state {
        EpidemicState::Sis(_) => Some(noise.realization(setting, horizon, p.dt)),
        EpidemicState::Seir(_) => None,
    };
    let windows = horizon - d + 1;
    let mut pairs = Vec::with_capacity(d * windows);
    let mut start = setting.state;
    for w in 0..windows {
        let controls = optimize_window_controls(setting, start, w, &p, bo, noise)?;
        let path = realization.as_ref().map(|r| &r.increments[w..w + d]);
        let traj = simulate(start, &controls, &p, path, w)?;
        for (j, c) in controls.iter().enumerate() {
            pairs.push(TrainingPair {
                label: setting.label.clone(),
                window: w,
                epoch: w + j,
                state: traj.states[j],
                beta: setting.beta,
                control: *c,
            });
        }
        start = traj.states[1];
    }
    Ok(pairs)
}

/// Collects every setting in parallel; results keep the settings' order.
pub fn collect_all(
    settings: &[InitialSetting],
    p: &EpidemicParams,
    bo: &BoConfig,
    noise: &NoiseConfig,
) -> Result<Vec<Vec<TrainingPair>>> {
    settings
        .par_iter()
        .map(|s| collect_trajectory(s, p, bo, noise))
        .collect()
}

/// Reassembles a full-horizon control sequence from one setting's windows:
/// the first control of every window, then the remainder of the last one.
pub fn receding_controls(pairs: &[TrainingPair], d: usize) -> Result<Vec<ControlPair>> {
    if pairs.is_empty() || d == 0 || !pairs.len().is_multiple_of(d) {
        return Err(Error::Input(format!(
            "{} pairs do not form whole windows of {d}",
            pairs.len()
        )));
    }
    let windows = pairs.len() / d;
    let mut out: Vec<ControlPair> = (0..windows - 1).map(|w| pairs[w * d].control).collect();
    out.extend(pairs[(windows - 1) * d..].iter().map(|p| p.control));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub model: ModelKind,
    pub window_dim: usize,
    pub horizon: usize,
    pub bo_hash: Option<u64>,
    pub pairs: Vec<TrainingPair>,
}

impl TrainingDataset {
    pub fn new(model: ModelKind, window_dim: usize, horizon: usize) -> Self {
        Self {
            model,
            window_dim,
            horizon,
            bo_hash: None,
            pairs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Consecutive runs of pairs sharing `(label, window)`, in file order.
    pub fn sequences(&self) -> Vec<&[TrainingPair]> {
        self.pairs
            .chunk_by(|a, b| a.label == b.label && a.window == b.window)
            .collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.pairs {
            if out.last() != Some(&p.label.as_str()) && !out.contains(&p.label.as_str()) {
                out.push(&p.label);
            }
        }
        out
    }

    pub fn pairs_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a TrainingPair> + 'a {
        self.pairs.iter().filter(move |p| p.label == label)
    }

    /// Checks the count law and window chaining for every setting.
    pub fn check_invariants(&self) -> Result<()> {
        let d = self.window_dim;
        let windows = self.horizon + 1 - d;
        for label in self.labels() {
            let pairs: Vec<&TrainingPair> = self.pairs_for(label).collect();
            if pairs.len() != d * windows {
                return Err(Error::Input(format!(
                    "`{label}` has {} pairs, expected {}",
                    pairs.len(),
                    d * windows
                )));
            }
            for w in 0..windows {
                let win = &pairs[w * d..(w + 1) * d];
                for (j, p) in win.iter().enumerate() {
                    if p.window != w || p.epoch != w + j {
                        return Err(Error::Input(format!("`{label}` window {w} is out of order")));
                    }
                    if !p.control.within(0.0, 1.0) {
                        return Err(Error::Input(format!("`{label}` control out of bounds")));
                    }
                }
                if w + 1 < windows && d > 1 && win[1].state != pairs[(w + 1) * d].state {
                    return Err(Error::Input(format!("`{label}` window {} does not chain", w + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "#schema={SCHEMA_VERSION}\n#model={}\n#d={}\n#horizon={}\n",
            self.model, self.window_dim, self.horizon
        );
        if let Some(h) = self.bo_hash {
            let _ = writeln!(out, "#bo_hash={h:016x}");
        }
        out.push_str(COLUMNS);
        out.push('\n');
        for p in &self.pairs {
            let (e, r) = match p.state {
                EpidemicState::Seir(s) => (fmt_f64(s.e), fmt_f64(s.r)),
                EpidemicState::Sis(_) => (String::new(), String::new()),
            };
            let c = p.state.components();
            let (s, i) = (c[0], p.state.infected());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                p.label,
                p.window,
                p.epoch,
                fmt_f64(s),
                e,
                fmt_f64(i),
                r,
                fmt_f64(p.beta),
                fmt_f64(p.control.u1),
                fmt_f64(p.control.u2)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { line, message };
        let mut schema = None;
        let mut model = None;
        let mut d = None;
        let mut horizon = None;
        let mut bo_hash = None;
        let mut seen_columns = false;
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(meta) = raw.strip_prefix('#') {
                let (key, value) = meta
                    .split_once('=')
                    .ok_or_else(|| err(line, format!("malformed header `{raw}`")))?;
                let int = |v: &str| v.parse::<usize>().map_err(|e| err(line, format!("{key}: {e}")));
                match key {
                    "schema" => {
                        let v = value.parse::<u32>().map_err(|e| err(line, e.to_string()))?;
                        if v != SCHEMA_VERSION {
                            return Err(err(line, format!("unsupported schema version {v}")));
                        }
                        schema = Some(v);
                    }
                    "model" => model = Some(value.parse::<ModelKind>().map_err(|e| err(line, e.to_string()))?),
                    "d" => d = Some(int(value)?),
                    "horizon" => horizon = Some(int(value)?),
                    "bo_hash" => {
                        bo_hash = Some(u64::from_str_radix(value, 16).map_err(|e| err(line, e.to_string()))?)
                    }
                    _ => return Err(err(line, format!("unknown header key `{key}`"))),
                }
                continue;
            }
            if !seen_columns {
                if raw != COLUMNS {
                    return Err(err(line, format!("expected column header `{COLUMNS}`")));
                }
                seen_columns = true;
                continue;
            }
            let kind = model.ok_or_else(|| err(line, "data before #model header".into()))?;
            pairs.push(parse_row(raw, kind).map_err(|m| err(line, m))?);
        }
        if schema.is_none() {
            return Err(err(1, "missing #schema header".into()));
        }
        let missing = |what: &str| err(1, format!("missing #{what} header"));
        Ok(Self {
            model: model.ok_or_else(|| missing("model"))?,
            window_dim: d.ok_or_else(|| missing("d"))?,
            horizon: horizon.ok_or_else(|| missing("horizon"))?,
            bo_hash,
            pairs,
        })
    }
}

fn parse_row(raw: &str, kind: ModelKind) -> std::result::Result<TrainingPair, String> {
    let f: Vec<&str> = raw.split(',').collect();
    if f.len() != 10 {
        return Err(format!("expected 10 columns, found {}", f.len()));
    }
    let num = |k: usize, name: &str| crate::parse_f64(f[k]).ok_or_else(|| format!("bad {name} `{}`", f[k]));
    let int = |k: usize, name: &str| f[k].parse::<usize>().map_err(|_| format!("bad {name} `{}`", f[k]));
    let state = match kind {
        ModelKind::Seir => seir(num(3, "S")?, num(4, "E")?, num(5, "I")?, num(6, "R")?),
        ModelKind::Sis => {
            if !f[4].is_empty() || !f[6].is_empty() {
                return Err("E and R must be empty for the sis model".into());
            }
            EpidemicState::Sis(SisState {
                s: num(3, "S")?,
                i: num(5, "I")?,
            })
        }
    };
    Ok(TrainingPair {
        label: f[0].to_string(),
        window: int(1, "window")?,
        epoch: int(2, "epoch")?,
        state,
        beta: num(7, "beta")?,
        control: ControlPair::new(num(8, "u1")?, num(9, "u2")?),
    })
}

pub fn save_dataset(ds: &TrainingDataset, path: &Path) -> Result<()> {
    std::fs::write(path, ds.to_csv())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<TrainingDataset> {
    TrainingDataset::from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_bo(d: usize) -> BoConfig {
        BoConfig {
            window_dim: d,
            n_init: 4,
            n_iters: 4,
            adam: crate::local_search::AdamConfig {
                max_iters: 20,
                ..Default::default()
            },
            ..BoConfig::default()
        }
    }

    fn params(horizon: usize) -> EpidemicParams {
        EpidemicParams {
            tf: horizon,
            ..EpidemicParams::default()
        }
    }

    #[test]
    fn pair_count_and_chaining() {
        let s = holdout_setting(ModelKind::Seir, 0.25);
        let pairs = collect_trajectory(&s, &params(5), &quick_bo(3), &NoiseConfig::default()).unwrap();
        assert_eq!(pairs.len(), 9);
        let ds = TrainingDataset {
            pairs,
            ..TrainingDataset::new(ModelKind::Seir, 3, 5)
        };
        ds.check_invariants().unwrap();
        assert_eq!(ds.sequences().len(), 3);
    }

    #[test]
    fn single_window_when_d_equals_horizon() {
        let s = holdout_setting(ModelKind::Sis, 0.25);
        let pairs = collect_trajectory(&s, &params(4), &quick_bo(4), &NoiseConfig::default()).unwrap();
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|p| p.window == 0));
    }

    #[test]
    fn collection_is_deterministic() {
        let s = reference_settings(ModelKind::Seir, 0.3).remove(0);
        let a = collect_trajectory(&s, &params(6), &quick_bo(3), &NoiseConfig::default()).unwrap();
        let b = collect_trajectory(&s, &params(6), &quick_bo(3), &NoiseConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_larger_than_horizon_rejected() {
        let s = holdout_setting(ModelKind::Seir, 0.25);
        assert!(collect_trajectory(&s, &params(3), &quick_bo(4), &NoiseConfig::default()).is_err());
    }

    #[test]
    fn reference_list_contains_first_state() {
        let list = vary_settings(&SettingsPlan::Explicit {
            settings: reference_settings(ModelKind::Seir, 0.25),
        })
        .unwrap();
        assert_eq!(list.len(), 5);
        assert!(list
            .iter()
            .any(|s| s.state == seir(0.4, 0.13, 0.47, 0.0) && s.beta == 0.25));
    }

    #[test]
    fn reference_plan_tags_multiple_betas() {
        let one = vary_settings(&SettingsPlan::Reference { model: ModelKind::Sis, betas: vec![0.3] }).unwrap();
        assert_eq!(one[0].label, "control1");
        let two = vary_settings(&SettingsPlan::Reference { model: ModelKind::Seir, betas: vec![0.25, 0.4] }).unwrap();
        assert_eq!(two.len(), 10);
        assert_eq!(two[5].label, "control1@0.4");
        assert!(vary_settings(&SettingsPlan::Reference { model: ModelKind::Seir, betas: vec![] }).is_err());
    }

    #[test]
    fn random_plan() {
        let plan = |count| SettingsPlan::Random {
            model: ModelKind::Seir,
            count,
            seed: 5,
            betas: vec![0.25, 0.3, 0.4],
        };
        assert!(vary_settings(&plan(0)).is_err());
        let a = vary_settings(&plan(20)).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, vary_settings(&plan(20)).unwrap());
        for s in &a {
            s.validate().unwrap();
            let c = s.state.components();
            assert_eq!(c[3], 0.0);
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn receding_reconstruction_length() {
        let s = holdout_setting(ModelKind::Seir, 0.25);
        let pairs = collect_trajectory(&s, &params(7), &quick_bo(3), &NoiseConfig::default()).unwrap();
        let ctrl = receding_controls(&pairs, 3).unwrap();
        assert_eq!(ctrl.len(), 7);
        assert_eq!(ctrl[0], pairs[0].control);
        assert_eq!(ctrl[6], pairs.last().unwrap().control);
    }

    #[test]
    fn empty_dataset_round_trip() {
        let ds = TrainingDataset::new(ModelKind::Sis, 5, 20);
        let text = ds.to_csv();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(TrainingDataset::from_csv(&text).unwrap(), ds);
    }

    #[test]
    fn one_pair_row_has_all_columns() {
        let mut ds = TrainingDataset::new(ModelKind::Seir, 1, 1);
        ds.bo_hash = Some(0xdead_beef);
        ds.pairs.push(TrainingPair {
            label: "a".into(),
            window: 0,
            epoch: 0,
            state: seir(0.1, 0.2, 0.3, 0.4),
            beta: 0.25,
            control: ControlPair::new(0.1, 1.0 / 3.0),
        });
        let text = ds.to_csv();
        let row = text.lines().last().unwrap();
        assert_eq!(row.split(',').count(), 10);
        assert_eq!(TrainingDataset::from_csv(&text).unwrap(), ds);
    }

    #[test]
    fn malformed_rows_report_line() {
        let good = "#schema=1\n#model=sis\n#d=1\n#horizon=1\nlabel,window,epoch,S,E,I,R,beta,u1,u2\n";
        let bad = format!("{good}a,0,0,0.5,,0.5,,0.25,0.1\n");
        match TrainingDataset::from_csv(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        let v2 = good.replace("schema=1", "schema=2");
        assert!(matches!(TrainingDataset::from_csv(&v2), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn large_random_round_trip_is_bit_exact() {
        let mut r = rng::seeded(3);
        let mut ds = TrainingDataset::new(ModelKind::Seir, 10, 1009);
        for k in 0..10_000 {
            let [s, e, i, x] = Dirichlet::new([1.0; 4]).unwrap().sample(&mut r);
            ds.pairs.push(TrainingPair {
                label: format!("s{}", k / 1000),
                window: (k / 10) % 100,
                epoch: k % 1000,
                state: seir(s, e, i, x),
                beta: r.random_range(0.1..0.5),
                control: ControlPair::new(r.random(), r.random()),
            });
        }
        let back = TrainingDataset::from_csv(&ds.to_csv()).unwrap();
        assert_eq!(back.pairs.len(), ds.pairs.len());
        for (a, b) in back.pairs.iter().zip(&ds.pairs) {
            assert_eq!(a.input().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                       b.input().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            assert_eq!(a.control.u1.to_bits(), b.control.u1.to_bits());
            assert_eq!(a.control.u2.to_bits(), b.control.u2.to_bits());
        }
        assert_eq!(back, ds);
    }
}
