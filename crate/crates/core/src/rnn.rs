//! Stacked Elman recurrent network mapping one state feature vector to one
//! control pair per step, trained by backpropagation through time.
//!
//! All weights live in one flat vector (see [`Layout`]), which keeps Adam,
//! checkpointing and the finite-difference check simple. Layer `l` computes
//! `h_l = act(W_l x_l + U_l h_l' + b_l)` with `x_1` the standardized input and
//! `x_{l+1} = h_l`; the head is `lo + (hi - lo) * sigmoid(V h_L + c)`.

use crate::data::TrainingDataset;
use crate::epidemic::{ControlPair, ModelKind};
use crate::error::{Error, Result};
use crate::{fmt_f64, rng};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub const CHECKPOINT_VERSION: u32 = 1;
const OUTPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    fn grad(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Input(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub epochs: usize,
    /// Sequences (windows) per Adam step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            hidden_size: 32,
            dropout_rate: 0.2,
            activation: Activation::Relu,
            epochs: 9,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        let problem = if !(2..=7).contains(&self.num_layers) {
            Some(format!("num_layers must be in 2..=7, got {}", self.num_layers))
        } else if self.hidden_size == 0 {
            Some("hidden_size must be positive".into())
        } else if !(0.0..1.0).contains(&self.dropout_rate) {
            Some(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate))
        } else if self.epochs == 0 {
            Some("epochs must be at least 1".into())
        } else if self.batch_size == 0 {
            Some("batch_size must be at least 1".into())
        } else if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            Some(format!("learning_rate must be positive, got {}", self.learning_rate))
        } else {
            None
        };
        problem.map_or(Ok(()), |m| Err(Error::Input(m)))
    }
}

/// Offsets of each weight block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub inputs: usize,
    pub hidden: usize,
    pub layers: usize,
    /// `(w, u, b)` offsets per layer.
    blocks: Vec<(usize, usize, usize)>,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    pub fn new(inputs: usize, hidden: usize, layers: usize) -> Self {
        let mut off = 0;
        let mut blocks = Vec::with_capacity(layers);
        for l in 0..layers {
            let fan_in = if l == 0 { inputs } else { hidden };
            let w = off;
            let u = w + hidden * fan_in;
            let b = u + hidden * hidden;
            off = b + hidden;
            blocks.push((w, u, b));
        }
        let head_w = off;
        let head_b = head_w + OUTPUTS * hidden;
        Self {
            inputs,
            hidden,
            layers,
            blocks,
            head_w,
            head_b,
            total: head_b + OUTPUTS,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    fn fan_in(&self, l: usize) -> usize {
        if l == 0 {
            self.inputs
        } else {
            self.hidden
        }
    }
}

/// `out += M x` for a row-major `rows x x.len()` matrix.
fn mat_vec_add(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T y` for a row-major `y.len() x out.len()` matrix.
fn mat_t_vec_add(out: &mut [f64], m: &[f64], y: &[f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr != 0.0 {
            for (o, a) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
                *o += a * yr;
            }
        }
    }
}

/// `G += y x^T`.
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr != 0.0 {
            for (gv, xv) in g[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *gv += yr * xv;
            }
        }
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Per-feature standardization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Population mean/std; a zero spread is replaced by 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Input("no rows to standardize".into()))?;
        let n = first.len();
        let count = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for r in rows {
            crate::error::check_dim(n, r.len())?;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// One training sequence: raw feature vectors and their target controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<ControlPair>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

pub fn dataset_sequences(ds: &TrainingDataset) -> Vec<Sequence> {
    ds.sequences()
        .into_iter()
        .map(|seq| Sequence {
            inputs: seq.iter().map(|p| p.input()).collect(),
            targets: seq.iter().map(|p| p.control).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub config: RnnConfig,
    pub model: ModelKind,
    pub bounds: (f64, f64),
    pub standardizer: Standardizer,
    pub params: Vec<f64>,
    layout: Layout,
    hidden_state: Vec<Vec<f64>>,
}

/// Forward-pass record of one sequence, kept for backpropagation.
struct Tape {
    /// `xs[t][l]`: input fed to layer `l` at step `t` (after dropout).
    xs: Vec<Vec<Vec<f64>>>,
    zs: Vec<Vec<Vec<f64>>>,
    hs: Vec<Vec<Vec<f64>>>,
    /// Head input (top hidden after dropout) and sigmoid output per step.
    top: Vec<Vec<f64>>,
    sig: Vec<[f64; OUTPUTS]>,
}

impl RnnModel {
    /// Randomly initialized network (Glorot-uniform input and head weights,
    /// scaled recurrent weights, zero biases).
    pub fn new(model: ModelKind, config: RnnConfig, bounds: (f64, f64)) -> Result<Self> {
        config.validate()?;
        let mut m = Self::zeros(model, config, bounds)?;
        let mut r = rng::stream(config.seed, 0);
        let h = config.hidden_size;
        let layout = m.layout.clone();
        for l in 0..layout.layers {
            let (w, u, _) = layout.blocks[l];
            let fan_in = layout.fan_in(l);
            let a = (6.0 / (fan_in + h) as f64).sqrt();
            for p in &mut m.params[w..w + h * fan_in] {
                *p = r.random_range(-a..a);
            }
            let a = 0.5 / (h as f64).sqrt();
            for p in &mut m.params[u..u + h * h] {
                *p = r.random_range(-a..a);
            }
        }
        let a = (6.0 / (h + OUTPUTS) as f64).sqrt();
        for p in &mut m.params[layout.head_w..layout.head_b] {
            *p = r.random_range(-a..a);
        }
        Ok(m)
    }

    /// All weights zero; every output is the midpoint of the bounds.
    pub fn zeros(model: ModelKind, config: RnnConfig, bounds: (f64, f64)) -> Result<Self> {
        config.validate()?;
        if !(bounds.0 < bounds.1) {
            return Err(Error::Input("control bounds must be increasing".into()));
        }
        let inputs = model.feature_len();
        let layout = Layout::new(inputs, config.hidden_size, config.num_layers);
        Ok(Self {
            config,
            model,
            bounds,
            standardizer: Standardizer::identity(inputs),
            params: vec![0.0; layout.len()],
            hidden_state: vec![vec![0.0; config.hidden_size]; config.num_layers],
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn reset(&mut self) {
        self.hidden_state.iter_mut().for_each(|h| h.fill(0.0));
    }

    pub fn hidden_state(&self) -> &[Vec<f64>] {
        &self.hidden_state
    }

    /// One inference step; advances the hidden state.
    pub fn forward(&mut self, features: &[f64]) -> Result<ControlPair> {
        crate::error::check_dim(self.layout.inputs, features.len())?;
        let mut x = self.standardizer.apply(features);
        let act = self.config.activation;
        for l in 0..self.layout.layers {
            let (w, u, b) = self.layout.blocks[l];
            let h = self.layout.hidden;
            let mut z = self.params[b..b + h].to_vec();
            mat_vec_add(&mut z, &self.params[w..u], &x);
            mat_vec_add(&mut z, &self.params[u..b], &self.hidden_state[l]);
            let hn: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            self.hidden_state[l].clone_from(&hn);
            x = hn;
        }
        let mut a = self.params[self.layout.head_b..self.layout.head_b + OUTPUTS].to_vec();
        mat_vec_add(&mut a, &self.params[self.layout.head_w..self.layout.head_b], &x);
        let (lo, hi) = self.bounds;
        let squash = |v: f64| (lo + (hi - lo) * sigmoid(v)).clamp(lo, hi);
        Ok(ControlPair::new(squash(a[0]), squash(a[1])))
    }

    fn tape(&self, seq: &Sequence, params: &[f64], masks: Option<&[Vec<f64>]>) -> Tape {
        let ly = &self.layout;
        let h = ly.hidden;
        let act = self.config.activation;
        let steps = seq.len();
        let mut tape = Tape {
            xs: Vec::with_capacity(steps),
            zs: Vec::with_capacity(steps),
            hs: Vec::with_capacity(steps),
            top: Vec::with_capacity(steps),
            sig: Vec::with_capacity(steps),
        };
        let zero = vec![0.0; h];
        for t in 0..steps {
            let mut x = self.standardizer.apply(&seq.inputs[t]);
            let (mut xs, mut zs, mut hs) = (Vec::new(), Vec::new(), Vec::new());
            for l in 0..ly.layers {
                let (w, u, b) = ly.blocks[l];
                let prev = if t == 0 { &zero } else { &tape.hs[t - 1][l] };
                let mut z = params[b..b + h].to_vec();
                mat_vec_add(&mut z, &params[w..u], &x);
                mat_vec_add(&mut z, &params[u..b], prev);
                let hn: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
                let mut next = hn.clone();
                if let Some(m) = masks {
                    next.iter_mut().zip(&m[l]).for_each(|(v, k)| *v *= k);
                }
                xs.push(std::mem::replace(&mut x, next));
                zs.push(z);
                hs.push(hn);
            }
            let mut a = params[ly.head_b..ly.head_b + OUTPUTS].to_vec();
            mat_vec_add(&mut a, &params[ly.head_w..ly.head_b], &x);
            tape.sig.push([sigmoid(a[0]), sigmoid(a[1])]);
            tape.top.push(x);
            tape.xs.push(xs);
            tape.zs.push(zs);
            tape.hs.push(hs);
        }
        tape
    }

    /// Squared-error sum of one sequence and, when `grad` is given, its
    /// gradient scaled by `scale` accumulated into `grad`.
    fn sequence_loss(
        &self,
        seq: &Sequence,
        params: &[f64],
        masks: Option<&[Vec<f64>]>,
        grad: Option<(&mut [f64], f64)>,
    ) -> f64 {
        let tape = self.tape(seq, params, masks);
        let (lo, hi) = self.bounds;
        let span = hi - lo;
        let mut sse = 0.0;
        let mut d_out = Vec::with_capacity(seq.len());
        for (s, target) in tape.sig.iter().zip(&seq.targets) {
            let err = [lo + span * s[0] - target.u1, lo + span * s[1] - target.u2];
            sse += err[0] * err[0] + err[1] * err[1];
            d_out.push(err);
        }
        let Some((g, scale)) = grad else {
            return sse;
        };
        let ly = &self.layout;
        let h = ly.hidden;
        let act = self.config.activation;
        let mut dh_next = vec![vec![0.0; h]; ly.layers];
        for t in (0..seq.len()).rev() {
            let s = tape.sig[t];
            let da: Vec<f64> = (0..OUTPUTS)
                .map(|k| 2.0 * scale * d_out[t][k] * span * s[k] * (1.0 - s[k]))
                .collect();
            outer_add(&mut g[ly.head_w..ly.head_b], &da, &tape.top[t]);
            g[ly.head_b..ly.head_b + OUTPUTS].iter_mut().zip(&da).for_each(|(gv, d)| *gv += d);
            // Gradient w.r.t. the (dropped-out) input of the layer above.
            let mut dx_above = vec![0.0; h];
            mat_t_vec_add(&mut dx_above, &params[ly.head_w..ly.head_b], &da);
            for l in (0..ly.layers).rev() {
                let (w, u, b) = ly.blocks[l];
                let mut dh = dh_next[l].clone();
                match masks {
                    Some(m) => dh.iter_mut().zip(&dx_above).zip(&m[l]).for_each(|((v, d), k)| *v += d * k),
                    None => dh.iter_mut().zip(&dx_above).for_each(|(v, d)| *v += d),
                }
                let dz: Vec<f64> = dh
                    .iter()
                    .zip(&tape.zs[t][l])
                    .zip(&tape.hs[t][l])
                    .map(|((d, &z), &hv)| d * act.grad(z, hv))
                    .collect();
                outer_add(&mut g[w..u], &dz, &tape.xs[t][l]);
                if t > 0 {
                    outer_add(&mut g[u..b], &dz, &tape.hs[t - 1][l]);
                }
                g[b..b + h].iter_mut().zip(&dz).for_each(|(gv, d)| *gv += d);
                let mut dx = vec![0.0; ly.fan_in(l)];
                mat_t_vec_add(&mut dx, &params[w..u], &dz);
                dx_above = dx;
                let mut dprev = vec![0.0; h];
                mat_t_vec_add(&mut dprev, &params[u..b], &dz);
                dh_next[l] = dprev;
            }
        }
        sse
    }

    /// Mean squared error over every step and output of `batch`, no dropout.
    pub fn loss(&self, batch: &[Sequence]) -> Result<f64> {
        let count = batch_count(batch)?;
        let sse: f64 = batch.iter().map(|s| self.sequence_loss(s, &self.params, None, None)).sum();
        Ok(sse / count)
    }

    /// Analytic gradient of [`RnnModel::loss`].
    pub fn loss_gradient(&self, batch: &[Sequence]) -> Result<(f64, Vec<f64>)> {
        let count = batch_count(batch)?;
        let mut g = vec![0.0; self.params.len()];
        let mut sse = 0.0;
        for s in batch {
            sse += self.sequence_loss(s, &self.params, None, Some((&mut g, 1.0 / count)));
        }
        Ok((sse / count, g))
    }

    /// Sign pattern of every ReLU pre-activation over `batch`; used to spot
    /// finite-difference probes that straddle a kink.
    fn kink_pattern(&self, batch: &[Sequence], params: &[f64]) -> Vec<bool> {
        batch
            .iter()
            .flat_map(|s| {
                let tape = self.tape(s, params, None);
                tape.zs.into_iter().flatten().flatten().map(|z| z > 0.0).collect::<Vec<_>>()
            })
            .collect()
    }
}

fn batch_count(batch: &[Sequence]) -> Result<f64> {
    if batch.is_empty() || batch.iter().any(Sequence::is_empty) {
        return Err(Error::Input("gradient needs non-empty sequences".into()));
    }
    for s in batch {
        if s.inputs.len() != s.targets.len() {
            return Err(Error::Dimension {
                expected: s.inputs.len(),
                got: s.targets.len(),
            });
        }
    }
    Ok((batch.iter().map(Sequence::len).sum::<usize>() * OUTPUTS) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Probes discarded because the perturbation flipped a ReLU.
    pub skipped_kinks: usize,
}

/// Compares the BPTT gradient with central differences on `samples`
/// randomly chosen parameters (all of them if the model is smaller). The
/// relative error is `|a - n| / max(|a|, |n|)`, taken as 0 when both vanish.
pub fn gradient_check(model: &RnnModel, batch: &[Sequence], samples: usize, seed: u64) -> Result<GradientCheck> {
    const H: f64 = 1e-5;
    let (_, analytic) = model.loss_gradient(batch)?;
    let mut r = rng::seeded(seed);
    let mut order: Vec<usize> = (0..model.params.len()).collect();
    order.shuffle(&mut r);
    let relu = model.config.activation == Activation::Relu;
    let base_pattern = if relu { model.kink_pattern(batch, &model.params) } else { Vec::new() };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for &k in &order {
        if checked == samples {
            break;
        }
        let orig = probe.params[k];
        probe.params[k] = orig + H;
        let plus = probe.loss(batch)?;
        let kink_plus = relu && probe.kink_pattern(batch, &probe.params) != base_pattern;
        probe.params[k] = orig - H;
        let minus = probe.loss(batch)?;
        let kink_minus = relu && probe.kink_pattern(batch, &probe.params) != base_pattern;
        probe.params[k] = orig;
        if kink_plus || kink_minus {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * H);
        let a = analytic[k];
        let denom = a.abs().max(numeric.abs());
        let rel = if denom == 0.0 { 0.0 } else { (a - numeric).abs() / denom };
        worst = worst.max(rel);
        checked += 1;
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        checked,
        skipped_kinks: skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss (dropout active) over each epoch's steps.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub wall_time: Duration,
}

impl TrainReport {
    /// CSV with columns `epoch,loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_history.iter().enumerate() {
            let _ = writeln!(out, "{e},{}", fmt_f64(*l));
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a fresh network on every window of `dataset`.
pub fn train(dataset: &TrainingDataset, cfg: &RnnConfig, bounds: (f64, f64)) -> Result<(RnnModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    train_sequences(dataset.model, &dataset_sequences(dataset), cfg, bounds)
}

pub fn train_sequences(
    kind: ModelKind,
    sequences: &[Sequence],
    cfg: &RnnConfig,
    bounds: (f64, f64),
) -> Result<(RnnModel, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    batch_count(sequences)?;
    let mut model = RnnModel::new(kind, *cfg, bounds)?;
    let rows: Vec<Vec<f64>> = sequences.iter().flat_map(|s| s.inputs.iter().cloned()).collect();
    model.standardizer = Standardizer::fit(&rows)?;

    let mut shuffle_rng = rng::stream(cfg.seed, 1);
    let mut dropout_rng = rng::stream(cfg.seed, 2);
    let keep = 1.0 - cfg.dropout_rate;
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; model.params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_sse = 0.0;
        let mut epoch_count = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.iter().map(|&i| sequences[i].len()).sum::<usize>() as f64 * OUTPUTS as f64;
            grad.fill(0.0);
            let mut sse = 0.0;
            for &i in chunk {
                let masks: Option<Vec<Vec<f64>>> = (cfg.dropout_rate > 0.0).then(|| {
                    (0..cfg.num_layers)
                        .map(|_| {
                            (0..cfg.hidden_size)
                                .map(|_| if dropout_rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                                .collect()
                        })
                        .collect()
                });
                let params = std::mem::take(&mut model.params);
                sse += model.sequence_loss(&sequences[i], &params, masks.as_deref(), Some((&mut grad, 1.0 / n)));
                model.params = params;
            }
            if !sse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("non-finite training loss in epoch {epoch}")));
            }
            adam.step(&mut model.params, &grad, cfg.learning_rate);
            epoch_sse += sse;
            epoch_count += n;
        }
        history.push(epoch_sse / epoch_count);
    }
    model.reset();
    let report = TrainReport {
        final_loss: *history.last().expect("epochs >= 1"),
        loss_history: history,
        wall_time: started.elapsed(),
    };
    Ok((model, report))
}

impl RnnModel {
    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let mut out = format!("#rnn_checkpoint={CHECKPOINT_VERSION}\n");
        let _ = writeln!(out, "model={}", self.model);
        let _ = writeln!(out, "num_layers={}", c.num_layers);
        let _ = writeln!(out, "hidden_size={}", c.hidden_size);
        let _ = writeln!(out, "dropout_rate={}", fmt_f64(c.dropout_rate));
        let _ = writeln!(out, "activation={}", c.activation);
        let _ = writeln!(out, "epochs={}", c.epochs);
        let _ = writeln!(out, "batch_size={}", c.batch_size);
        let _ = writeln!(out, "learning_rate={}", fmt_f64(c.learning_rate));
        let _ = writeln!(out, "seed={}", c.seed);
        let _ = writeln!(out, "bounds={},{}", fmt_f64(self.bounds.0), fmt_f64(self.bounds.1));
        let _ = writeln!(out, "feature_mean={}", join(&self.standardizer.mean));
        let _ = writeln!(out, "feature_std={}", join(&self.standardizer.std));
        let _ = writeln!(out, "params={}", self.params.len());
        for p in &self.params {
            out.push_str(&fmt_f64(*p));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: String| Error::Parse { line, message };
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (n, l) = lines.next().ok_or_else(|| err(0, format!("truncated checkpoint: missing `{key}`")))?;
            let prefix = format!("{key}=");
            l.strip_prefix(&prefix)
                .map(|v| (n, v.to_string()))
                .ok_or_else(|| err(n, format!("expected `{key}=`")))
        };
        let (n, version) = next("#rnn_checkpoint")?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(err(n, format!("unsupported checkpoint version {version}")));
        }
        fn parse<T: FromStr>(field: (usize, String)) -> Result<T> {
            field.1.parse().map_err(|_| Error::Parse {
                line: field.0,
                message: format!("cannot parse `{}`", field.1),
            })
        }
        let float = |field: (usize, String)| {
            crate::parse_f64(&field.1).ok_or_else(|| err(field.0, format!("bad number `{}`", field.1)))
        };
        let floats = |field: (usize, String)| -> Result<Vec<f64>> {
            field
                .1
                .split(',')
                .map(|s| crate::parse_f64(s).ok_or_else(|| err(field.0, format!("bad number `{s}`"))))
                .collect()
        };
        let model: ModelKind = next("model")?.1.parse()?;
        let config = RnnConfig {
            num_layers: parse(next("num_layers")?)?,
            hidden_size: parse(next("hidden_size")?)?,
            dropout_rate: float(next("dropout_rate")?)?,
            activation: next("activation")?.1.parse()?,
            epochs: parse(next("epochs")?)?,
            batch_size: parse(next("batch_size")?)?,
            learning_rate: float(next("learning_rate")?)?,
            seed: parse(next("seed")?)?,
        };
        let b = floats(next("bounds")?)?;
        let (mean_line, mean) = {
            let f = next("feature_mean")?;
            (f.0, floats(f)?)
        };
        let std = floats(next("feature_std")?)?;
        let (count_line, count) = {
            let f = next("params")?;
            (f.0, parse::<usize>(f)?)
        };
        let [lo, hi] = b[..] else {
            return Err(err(count_line, "bounds need two values".into()));
        };
        let mut m = Self::zeros(model, config, (lo, hi))?;
        if mean.len() != model.feature_len() || std.len() != model.feature_len() {
            return Err(err(mean_line, format!("expected {} standardization constants", model.feature_len())));
        }
        if count != m.params.len() {
            return Err(err(
                count_line,
                format!("shape mismatch: {count} parameters, layout needs {}", m.params.len()),
            ));
        }
        m.standardizer = Standardizer { mean, std };
        for k in 0..count {
            let (n, l) = lines
                .next()
                .ok_or_else(|| err(0, format!("truncated checkpoint: {k} of {count} parameters")))?;
            m.params[k] = crate::parse_f64(l).ok_or_else(|| err(n, format!("bad parameter `{l}`")))?;
        }
        if let Some((n, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(err(n, format!("unexpected trailing content `{l}`")));
        }
        Ok(m)
    }
}

pub fn save_model(model: &RnnModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_checkpoint())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RnnModel> {
    RnnModel::from_checkpoint(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RnnConfig {
        RnnConfig {
            num_layers: 2,
            hidden_size: 6,
            dropout_rate: 0.0,
            ..RnnConfig::default()
        }
    }

    fn random_batch(r: &mut rng::Rng, n: usize, len: usize, features: usize) -> Vec<Sequence> {
        (0..n)
            .map(|_| Sequence {
                inputs: (0..len).map(|_| (0..features).map(|_| r.random_range(-1.0..1.0)).collect()).collect(),
                targets: (0..len).map(|_| ControlPair::new(r.random(), r.random())).collect(),
            })
            .collect()
    }

    #[test]
    fn zero_model_outputs_midpoint() {
        let mut m = RnnModel::zeros(ModelKind::Seir, RnnConfig::default(), (0.0, 1.0)).unwrap();
        assert_eq!(m.forward(&[0.5, 0.3, 0.2, 0.0, 0.25]).unwrap(), ControlPair::new(0.5, 0.5));
    }

    #[test]
    fn reset_makes_calls_repeatable() {
        let mut m = RnnModel::new(ModelKind::Seir, small_cfg(), (0.0, 1.0)).unwrap();
        let x = [0.5, 0.3, 0.2, 0.0, 0.25];
        let a = m.forward(&x).unwrap();
        m.reset();
        assert_eq!(m.forward(&x).unwrap(), a);
    }

    #[test]
    fn recurrence_carries_state() {
        let mut m = RnnModel::zeros(ModelKind::Sis, small_cfg(), (0.0, 1.0)).unwrap();
        let ly = m.layout().clone();
        // Input drives unit 0 of layer 0, which feeds itself and the head.
        let (w, u, _) = ly.blocks[0];
        m.params[w] = 1.0;
        m.params[u] = 1.0;
        let (w1, _, _) = ly.blocks[1];
        m.params[w1] = 1.0;
        m.params[ly.head_w] = 1.0;
        let a = m.forward(&[1.0, 0.0, 0.0]).unwrap();
        let b = m.forward(&[1.0, 0.0, 0.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn wrong_feature_length_rejected() {
        let mut m = RnnModel::zeros(ModelKind::Sis, small_cfg(), (0.0, 1.0)).unwrap();
        assert!(m.forward(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn config_bounds_enforced() {
        for bad in [
            RnnConfig { num_layers: 1, ..RnnConfig::default() },
            RnnConfig { num_layers: 8, ..RnnConfig::default() },
            RnnConfig { epochs: 0, ..RnnConfig::default() },
            RnnConfig { dropout_rate: 1.0, ..RnnConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::seeded(4);
        for (k, act) in [Activation::Tanh, Activation::Relu].into_iter().enumerate() {
            let cfg = RnnConfig {
                activation: act,
                seed: k as u64,
                ..small_cfg()
            };
            let m = RnnModel::new(ModelKind::Seir, cfg, (0.0, 1.0)).unwrap();
            let batch = random_batch(&mut r, 3, 4, 5);
            let check = gradient_check(&m, &batch, 60, 9).unwrap();
            assert!(check.checked >= 50);
            assert!(check.max_relative_error < 1e-4, "{act}: {check:?}");
        }
    }

    #[test]
    fn single_step_sequence_checks_too() {
        let mut r = rng::seeded(5);
        let m = RnnModel::new(ModelKind::Sis, small_cfg(), (0.0, 1.0)).unwrap();
        let batch = random_batch(&mut r, 2, 1, 3);
        assert!(gradient_check(&m, &batch, 50, 1).unwrap().max_relative_error < 1e-4);
        let empty = vec![Sequence { inputs: vec![], targets: vec![] }];
        assert!(gradient_check(&m, &empty, 50, 1).is_err());
    }

    #[test]
    fn memorizes_a_single_pattern() {
        let seq = Sequence {
            inputs: vec![vec![0.5, 0.5, 0.25]; 4],
            targets: vec![ControlPair::new(0.3, 0.7); 4],
        };
        let cfg = RnnConfig {
            epochs: 400,
            learning_rate: 1e-2,
            ..small_cfg()
        };
        let (_, report) = train_sequences(ModelKind::Sis, &vec![seq; 8], &cfg, (0.0, 1.0)).unwrap();
        assert!(report.final_loss < 1e-4, "{}", report.final_loss);
    }

    #[test]
    fn training_is_seeded() {
        let mut r = rng::seeded(6);
        let batch = random_batch(&mut r, 20, 5, 3);
        let cfg = RnnConfig {
            dropout_rate: 0.2,
            epochs: 3,
            ..small_cfg()
        };
        let (a, ra) = train_sequences(ModelKind::Sis, &batch, &cfg, (0.0, 1.0)).unwrap();
        let (b, rb) = train_sequences(ModelKind::Sis, &batch, &cfg, (0.0, 1.0)).unwrap();
        assert_eq!(ra.loss_history, rb.loss_history);
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut r = rng::seeded(7);
        let batch = random_batch(&mut r, 10, 5, 5);
        let cfg = RnnConfig { epochs: 2, ..RnnConfig::default() };
        let (mut m, _) = train_sequences(ModelKind::Seir, &batch, &cfg, (0.0, 1.0)).unwrap();
        let mut back = RnnModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
        for x in &batch[0].inputs {
            assert_eq!(m.forward(x).unwrap(), back.forward(x).unwrap());
        }
    }

    #[test]
    fn truncated_or_mismatched_checkpoint_fails() {
        let m = RnnModel::new(ModelKind::Seir, small_cfg(), (0.0, 1.0)).unwrap();
        let text = m.to_checkpoint();
        let cut: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(RnnModel::from_checkpoint(&cut).is_err());
        let wrong = text.replace("hidden_size=6", "hidden_size=7");
        assert!(RnnModel::from_checkpoint(&wrong).is_err());
        let v2 = text.replace("#rnn_checkpoint=1", "#rnn_checkpoint=2");
        assert!(RnnModel::from_checkpoint(&v2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn outputs_stay_in_bounds(xs in proptest::collection::vec(-1e6f64..1e6, 15), seed in 0u64..50) {
            let cfg = RnnConfig { seed, ..RnnConfig::default() };
            let mut m = RnnModel::new(ModelKind::Seir, cfg, (0.0, 1.0)).unwrap();
            for x in xs.chunks(5) {
                let c = m.forward(x).unwrap();
                proptest::prop_assert!(c.within(0.0, 1.0));
            }
        }
    }
}
