//! The pipeline stages behind the `epibo` binary. Each command reads a
//! resolved [`RunConfig`], writes CSV/checkpoint files under `out_dir` and
//! returns what it wrote. Identical configuration and seed give identical
//! bytes (the benchmark's optional timing column aside).

use crate::benchmarks::{run_benchmark, stats_csv, trajectory_csv, SyntheticFunction};
use crate::bo::{optimize_full, optimize_window, BoResult};
use crate::closed_loop::{
    compare_policies, fixed_rollout, null_rollout, predict_rollout, real_optimal_control, transplant_rollout,
    Comparison, PolicyRollout, Provenance,
};
use crate::config::RunConfig;
use crate::data::{
    collect_all, load_dataset, receding_controls, save_dataset, unit_to_controls, vary_settings, TrainingDataset,
};
use crate::epidemic::{simulate, window_objective, ControlPair, EpidemicState, NoiseBundle, Trajectory};
use crate::error::{Error, Result};
use crate::rnn::{load_model, save_model, train, RnnConfig, TrainReport};
use crate::{fmt_f64, rng};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable holding the worker-thread count for parallel stages.
pub const WORKERS_ENV: &str = "EPIBO_WORKERS";

/// Process exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) | Error::Factorization { .. } => 3,
        _ => 2,
    }
}

/// Runs `f` on a thread pool sized by [`WORKERS_ENV`] (rayon's default when
/// unset). Parallel stages merge results in input order, so the worker count
/// never changes the output.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(f());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{raw}`")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

impl CommandOutput {
    fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        self.files.push(path.clone());
        Ok(path)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    Ok(cfg.out_dir.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlsSource {
    Null,
    Constant(ControlPair),
    File(PathBuf),
}

impl std::str::FromStr for ControlsSource {
    type Err = Error;

    /// `null`, `constant:U1,U2` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "null" {
            return Ok(ControlsSource::Null);
        }
        if let Some(v) = s.strip_prefix("constant:") {
            let parts: Vec<f64> = v.split(',').filter_map(crate::parse_f64).collect();
            if let [u1, u2] = parts[..] {
                return Ok(ControlsSource::Constant(ControlPair::new(u1, u2)));
            }
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(ControlsSource::File(PathBuf::from(p)));
        }
        Err(Error::Config(format!(
            "controls must be `null`, `constant:U1,U2` or `file:PATH`, got `{s}`"
        )))
    }
}

/// Reads the `u1` and `u2` columns of any CSV with a header row.
pub fn read_controls_csv(path: &Path) -> Result<Vec<ControlPair>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty controls file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing `{name}` column"),
        })
    };
    let (a, b) = (find("u1")?, find("u2")?);
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let get = |k: usize| {
                f.get(k).and_then(|v| crate::parse_f64(v)).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("bad control row `{l}`"),
                })
            };
            Ok(ControlPair::new(get(a)?, get(b)?))
        })
        .collect()
}

fn controls_csv(controls: &[ControlPair]) -> String {
    let mut out = String::from("epoch,u1,u2\n");
    for (t, c) in controls.iter().enumerate() {
        let _ = writeln!(out, "{t},{},{}", fmt_f64(c.u1), fmt_f64(c.u2));
    }
    out
}

/// The shared realization path for stochastic runs of the target setting.
fn target_noise(cfg: &RunConfig) -> Option<Vec<f64>> {
    let target = cfg.target_setting();
    match target.state {
        EpidemicState::Sis(_) => Some(
            cfg.noise
                .realization(&target, cfg.params.horizon(), cfg.params.dt)
                .increments,
        ),
        EpidemicState::Seir(_) => None,
    }
}

pub fn cmd_simulate(cfg: &RunConfig, source: &ControlsSource) -> Result<(CommandOutput, Trajectory)> {
    let cfg = cfg.resolved();
    let target = cfg.target_setting();
    let p = cfg.params.with_beta(target.beta);
    let horizon = p.horizon();
    let controls = match source {
        ControlsSource::Null => vec![ControlPair::new(p.u_lower, p.u_lower); horizon],
        ControlsSource::Constant(c) => vec![*c; horizon],
        ControlsSource::File(path) => read_controls_csv(path)?,
    };
    if controls.len() != horizon {
        return Err(Error::Input(format!(
            "controls cover {} epochs, the horizon is {horizon}",
            controls.len()
        )));
    }
    let noise = target_noise(&cfg);
    let traj = simulate(target.state, &controls, &p, noise.as_deref(), p.t1)?;
    let mut out = CommandOutput::default();
    out.write(&out_dir(&cfg)?, "trajectory.csv", &traj.to_csv(p.t1))?;
    Ok((out, traj))
}

/// One BO run from the target state: the first window, or with `full` the
/// whole horizon as a single window.
pub fn cmd_optimize(cfg: &RunConfig, full: bool) -> Result<(CommandOutput, BoResult)> {
    let cfg = cfg.resolved();
    let target = cfg.target_setting();
    let p = cfg.params.with_beta(target.beta);
    let dims = if full { p.horizon() } else { cfg.bo.window_dim };
    if dims > p.horizon() {
        return Err(Error::Config(format!("window {dims} exceeds the horizon {}", p.horizon())));
    }
    let bundle = match target.state {
        EpidemicState::Sis(_) => Some(NoiseBundle::generate(
            rng::derive_seed(cfg.noise.seed, target.stream_id()),
            cfg.noise.replications,
            dims,
            p.dt,
        )),
        EpidemicState::Seir(_) => None,
    };
    let objective = |x: &[f64]| window_objective(target.state, &unit_to_controls(x, &p)?, &p, bundle.as_ref());
    let result = if full {
        optimize_full(objective, 2, dims, &cfg.bo)?
    } else {
        optimize_window(objective, 2, &cfg.bo)?
    };
    let dir = out_dir(&cfg)?;
    let mut out = CommandOutput::default();
    out.write(&dir, "history.csv", &result.history_csv())?;
    out.write(&dir, "controls.csv", &controls_csv(&unit_to_controls(&result.best_point, &p)?))?;
    if let Some(e) = &result.failure {
        return Err(Error::Numerical(format!("optimization stopped early: {e}")));
    }
    Ok((out, result))
}

pub const DATASET_FILE: &str = "dataset.csv";

/// Harvests training pairs for every planned setting. With `resume`, labels
/// already complete in an existing dataset file are skipped.
pub fn cmd_collect(cfg: &RunConfig, resume: bool) -> Result<(CommandOutput, TrainingDataset)> {
    let cfg = cfg.resolved();
    let settings = vary_settings(&cfg.settings_plan())?;
    if let Some(s) = settings.iter().find(|s| s.kind() != cfg.model) {
        return Err(Error::Config(format!("setting `{}` does not match model {}", s.label, cfg.model)));
    }
    let d = cfg.bo.window_dim;
    let horizon = cfg.params.horizon();
    if d > horizon {
        return Err(Error::Config(format!("window {d} exceeds the horizon {horizon}")));
    }
    let dir = out_dir(&cfg)?;
    let path = dir.join(DATASET_FILE);
    let mut out = CommandOutput::default();
    let mut ds = TrainingDataset::new(cfg.model, d, horizon);
    ds.bo_hash = Some(cfg.bo.fingerprint());
    if resume && path.exists() {
        let old = load_dataset(&path)?;
        if old.model != ds.model || old.window_dim != d || old.horizon != horizon || old.bo_hash != ds.bo_hash {
            return Err(Error::Config("existing dataset was collected with a different configuration".into()));
        }
        ds = old;
    }
    let per_setting = d * (horizon - d + 1);
    let done: Vec<String> = ds
        .labels()
        .into_iter()
        .filter(|l| ds.pairs_for(l).count() == per_setting)
        .map(str::to_string)
        .collect();
    // Drop partial settings; they are collected again.
    ds.pairs.retain(|p| done.contains(&p.label));
    let todo: Vec<_> = settings
        .into_iter()
        .filter(|s| {
            let skip = done.contains(&s.label);
            if skip {
                out.notices.push(format!("skipping `{}`: already collected", s.label));
            }
            !skip
        })
        .collect();
    let collected = with_workers(|| collect_all(&todo, &cfg.params, &cfg.bo, &cfg.noise))??;
    for pairs in collected {
        ds.pairs.extend(pairs);
    }
    ds.check_invariants()?;
    save_dataset(&ds, &path)?;
    out.files.push(path);
    Ok((out, ds))
}

/// Trains one network per `(layers, epochs)` combination. A single
/// combination writes `model.ckpt`; a grid writes `model_l{L}_e{E}.ckpt`.
/// `train_report.csv` holds one loss-history row per combination.
pub fn cmd_train(
    cfg: &RunConfig,
    dataset: &Path,
    layers: &[usize],
    epochs: &[usize],
) -> Result<(CommandOutput, Vec<(RnnConfig, TrainReport)>)> {
    let cfg = cfg.resolved();
    let ds = load_dataset(dataset)?;
    if ds.is_empty() {
        return Err(Error::Input(format!("dataset {} has no pairs", dataset.display())));
    }
    if ds.model != cfg.model {
        return Err(Error::Config(format!("dataset holds {} data, config model is {}", ds.model, cfg.model)));
    }
    let layers = if layers.is_empty() { vec![cfg.rnn.num_layers] } else { layers.to_vec() };
    let epochs = if epochs.is_empty() { vec![cfg.rnn.epochs] } else { epochs.to_vec() };
    let grid: Vec<RnnConfig> = layers
        .iter()
        .flat_map(|&l| {
            epochs.iter().map(move |&e| RnnConfig {
                num_layers: l,
                epochs: e,
                ..cfg.rnn
            })
        })
        .collect();
    for c in &grid {
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let dir = out_dir(&cfg)?;
    let mut out = CommandOutput::default();
    let mut reports = Vec::with_capacity(grid.len());
    for c in &grid {
        let (model, report) = train(&ds, c, (cfg.params.u_lower, cfg.params.u_upper))?;
        let name = if grid.len() == 1 {
            "model.ckpt".to_string()
        } else {
            format!("model_l{}_e{}.ckpt", c.num_layers, c.epochs)
        };
        save_model(&model, &dir.join(&name))?;
        out.files.push(dir.join(name));
        reports.push((*c, report));
    }
    let width = reports.iter().map(|(c, _)| c.epochs).max().unwrap_or(0);
    let mut csv = String::from("layers,epochs,final_loss");
    for e in 0..width {
        let _ = write!(csv, ",loss_{e}");
    }
    csv.push('\n');
    for (c, r) in &reports {
        let _ = write!(csv, "{},{},{}", c.num_layers, c.epochs, fmt_f64(r.final_loss));
        for e in 0..width {
            csv.push(',');
            if let Some(l) = r.loss_history.get(e) {
                csv.push_str(&fmt_f64(*l));
            }
        }
        csv.push('\n');
    }
    out.write(&dir, "train_report.csv", &csv)?;
    Ok((out, reports))
}

/// Rolls the checkpointed predictor out on the target setting. With a
/// comparison dataset, also rolls out the null policy, the receding-horizon
/// BO control for the target and every dataset setting's control
/// transplanted onto the target.
pub fn cmd_predict(
    cfg: &RunConfig,
    checkpoint: &Path,
    compare: Option<&Path>,
) -> Result<(CommandOutput, PolicyRollout, Option<Comparison>)> {
    let cfg = cfg.resolved();
    let target = cfg.target_setting();
    let mut model = load_model(checkpoint)?;
    let noise = target_noise(&cfg);
    let predicted = predict_rollout(&mut model, &target, &cfg.params, noise.as_deref())?;
    let dir = out_dir(&cfg)?;
    let mut out = CommandOutput::default();
    out.write(&dir, "rollout.csv", &predicted.trajectory.to_csv(cfg.params.t1))?;
    let Some(ds_path) = compare else {
        return Ok((out, predicted, None));
    };
    let ds = load_dataset(ds_path)?;
    let horizon = cfg.params.horizon();
    if ds.horizon != horizon || ds.model != cfg.model {
        return Err(Error::Config(format!(
            "comparison dataset covers a {} horizon of {} epochs, config is {} over {horizon}",
            ds.model, ds.horizon, cfg.model
        )));
    }
    let n = noise.as_deref();
    let mut rollouts = vec![null_rollout(&target, &cfg.params, n)?];
    let bo = crate::bo::BoConfig {
        window_dim: ds.window_dim,
        ..cfg.bo
    };
    let real = real_optimal_control(&target, &cfg.params, &bo, &cfg.noise)?;
    rollouts.push(fixed_rollout("bo_real".into(), Provenance::BoReal, &real, &target, &cfg.params, n)?);
    for label in ds.labels() {
        let pairs: Vec<_> = ds.pairs_for(label).cloned().collect();
        let controls = receding_controls(&pairs, ds.window_dim)?;
        rollouts.push(transplant_rollout(label, &controls, &target, &cfg.params, n)?);
    }
    rollouts.push(predicted.clone());
    let cmp = compare_policies(rollouts)?;
    out.write(&dir, "comparison.csv", &cmp.series_csv())?;
    out.write(&dir, "comparison_summary.csv", &cmp.summary_csv())?;
    Ok((out, predicted, Some(cmp)))
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<(CommandOutput, Vec<crate::benchmarks::BenchmarkStats>)> {
    let cfg = cfg.resolved();
    let b = &cfg.benchmark;
    if b.functions.is_empty() {
        return Err(Error::Config("no benchmark functions selected".into()));
    }
    let seeds: Vec<u64> = (0..b.runs as u64).map(|k| rng::derive_seed(cfg.bo.seed, k)).collect();
    let dir = out_dir(&cfg)?;
    let mut out = CommandOutput::default();
    let mut stats = Vec::new();
    for kind in &b.functions {
        let f = SyntheticFunction::new(*kind, b.dimension).map_err(|e| Error::Config(e.to_string()))?;
        let s = with_workers(|| run_benchmark(&f, &cfg.bo, &seeds))??;
        out.write(&dir, &format!("trajectory_{kind}.csv"), &trajectory_csv(&f, &s))?;
        stats.push(s);
    }
    out.write(&dir, "benchmark.csv", &stats_csv(&stats, b.timing))?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::ModelKind;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        assert_eq!(exit_code(&Error::Factorization { pivot: 1, value: 0.0 }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Input("x".into())), 2);
    }

    #[test]
    fn controls_source_parsing() {
        assert_eq!("null".parse::<ControlsSource>().unwrap(), ControlsSource::Null);
        assert_eq!(
            "constant:1,0.5".parse::<ControlsSource>().unwrap(),
            ControlsSource::Constant(ControlPair::new(1.0, 0.5))
        );
        assert!("constant:1".parse::<ControlsSource>().is_err());
        assert!("zero".parse::<ControlsSource>().is_err());
    }

    #[test]
    fn simulate_reads_its_own_output_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out_dir: dir.path().to_path_buf(),
            model: ModelKind::Sis,
            params: crate::epidemic::EpidemicParams {
                tf: 12,
                ..Default::default()
            },
            ..RunConfig::default()
        };
        let (out, a) = cmd_simulate(&cfg, &ControlsSource::Constant(ControlPair::new(0.2, 0.4))).unwrap();
        let copy = dir.path().join("copy.csv");
        std::fs::copy(&out.files[0], &copy).unwrap();
        let (_, b) = cmd_simulate(&cfg, &ControlsSource::File(copy)).unwrap();
        assert_eq!(a, b);
    }
}
