//! Bayesian-optimization driver over the unit cube.
//!
//! One run: `n_init` uniform designs, then `n_iters` acquisition steps (GP
//! refit, bandit + random-search proposal, evaluation), then an Adam polish
//! from the incumbent. [`optimize_window`] treats `d` epochs of `c` control
//! channels as one `d*c` vector; [`optimize_full`] is the same run with the
//! whole horizon as a single window.

use crate::acquisition::{choose, mab_search, random_search, LcbConfig, MabState, SamplerConfig};
use crate::error::{Error, Result};
use crate::gp::{self, GpDataset, KernelConfig};
use crate::local_search::{adam_descend, AdamConfig};
use crate::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const UNIT_BOUNDS: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    /// Epochs optimized per window (`d`).
    pub window_dim: usize,
    pub n_init: usize,
    pub n_iters: usize,
    pub kernel: KernelConfig,
    pub lcb: LcbConfig,
    pub sampler: SamplerConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            window_dim: 10,
            n_init: 10,
            n_iters: 50,
            kernel: KernelConfig::default(),
            lcb: LcbConfig::default(),
            sampler: SamplerConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_dim == 0 {
            return Err(Error::Input("window_dim must be at least 1".into()));
        }
        if self.n_init == 0 {
            return Err(Error::Input("n_init must be at least 1".into()));
        }
        self.kernel.validate()?;
        self.lcb.validate()?;
        self.sampler.validate()?;
        self.adam.validate()
    }

    /// Stable FNV-1a hash of the configuration, for dataset provenance.
    pub fn fingerprint(&self) -> u64 {
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub best_value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Best-so-far after each design/acquisition evaluation, then one final
    /// entry after the local search.
    pub history: Vec<HistoryEntry>,
    /// Total objective calls, local search included.
    pub evaluations: usize,
    /// Every point proposed during the design and acquisition phases, with
    /// its value, in evaluation order.
    pub samples: Vec<(Vec<f64>, f64)>,
    /// Set when the run stopped early; the rest of the result is best-so-far.
    pub failure: Option<Error>,
}

impl BoResult {
    /// CSV with columns `iteration,best_value,evaluations`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,best_value,evaluations\n");
        for h in &self.history {
            let _ = writeln!(out, "{},{},{}", h.iteration, crate::fmt_f64(h.best_value), h.evaluations);
        }
        out
    }
}

struct Tracker {
    best_point: Vec<f64>,
    best_value: f64,
    history: Vec<HistoryEntry>,
    samples: Vec<(Vec<f64>, f64)>,
    evaluations: usize,
}

impl Tracker {
    fn record(&mut self, point: Vec<f64>, value: f64) {
        self.evaluations += 1;
        if value < self.best_value {
            self.best_value = value;
            self.best_point.clone_from(&point);
        }
        self.samples.push((point, value));
        self.history.push(HistoryEntry {
            iteration: self.history.len(),
            best_value: self.best_value,
            evaluations: self.evaluations,
        });
    }

    fn finish(self, failure: Option<Error>) -> Result<BoResult> {
        if self.samples.is_empty() {
            return Err(failure.unwrap_or_else(|| Error::Numerical("no evaluations".into())));
        }
        Ok(BoResult {
            best_point: self.best_point,
            best_value: self.best_value,
            history: self.history,
            evaluations: self.evaluations,
            samples: self.samples,
            failure,
        })
    }
}

fn checked(v: Result<f64>) -> Result<f64> {
    match v {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(x) => Err(Error::Numerical(format!("objective returned {x}"))),
        Err(e) => Err(e),
    }
}

/// Minimizes `objective` over `[0,1]^dim`.
pub fn optimize<F>(mut objective: F, dim: usize, cfg: &BoConfig) -> Result<BoResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::Input("cannot optimize a zero-dimensional objective".into()));
    }
    let mut design_rng = rng::stream(cfg.seed, 0);
    let mut sampler_rng = rng::stream(rng::derive_seed(cfg.seed, 1), cfg.sampler.seed);
    let mut t = Tracker {
        best_point: Vec::new(),
        best_value: f64::INFINITY,
        history: Vec::new(),
        samples: Vec::new(),
        evaluations: 0,
    };

    for _ in 0..cfg.n_init {
        let u: Vec<f64> = (0..dim).map(|_| design_rng.random::<f64>()).collect();
        match checked(objective(&u)) {
            Ok(v) => t.record(u, v),
            Err(e) => return t.finish(Some(e)),
        }
    }

    let mut mab = MabState::new(&cfg.sampler, UNIT_BOUNDS.0, UNIT_BOUNDS.1)?;
    for _ in 0..cfg.n_iters {
        let data = GpDataset::from_parts(
            t.samples.iter().map(|(p, _)| p.clone()).collect(),
            t.samples.iter().map(|(_, v)| *v).collect(),
        )?;
        let model = match gp::fit(data, cfg.kernel) {
            Ok(m) => m,
            Err(e) => return t.finish(Some(e)),
        };
        let from_mab = mab_search(&mut mab, &model, &cfg.lcb, cfg.sampler.mab_rounds, &mut sampler_rng)?;
        let from_rs = random_search(&model, &cfg.sampler, &cfg.lcb, UNIT_BOUNDS, &mut sampler_rng)?;
        let next = choose(from_mab, from_rs).point;
        match checked(objective(&next)) {
            Ok(v) => t.record(next, v),
            Err(e) => return t.finish(Some(e)),
        }
    }

    let start = t.best_point.clone();
    let polished = adam_descend(&mut objective, &start, &cfg.adam, UNIT_BOUNDS);
    let failure = match polished {
        Ok(out) => {
            t.evaluations += out.evaluations;
            if out.value < t.best_value {
                t.best_value = out.value;
                t.best_point = out.point;
            }
            out.warning
        }
        Err(e) => Some(e),
    };
    t.history.push(HistoryEntry {
        iteration: t.history.len(),
        best_value: t.best_value,
        evaluations: t.evaluations,
    });
    t.finish(failure)
}

/// One window of `window_dim` epochs and `channels` control channels.
pub fn optimize_window<F>(objective: F, channels: usize, cfg: &BoConfig) -> Result<BoResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    optimize(objective, cfg.window_dim * channels, cfg)
}

/// Standard full-dimensional BO: the whole `horizon` as one window.
pub fn optimize_full<F>(objective: F, channels: usize, horizon: usize, cfg: &BoConfig) -> Result<BoResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let cfg = BoConfig {
        window_dim: horizon,
        ..*cfg
    };
    optimize_window(objective, channels, &cfg)
}
