//! Lower-confidence-bound acquisition and the candidate sampler that
//! minimizes it: a multi-armed bandit over sub-intervals of the control range
//! run alongside plain uniform random search.
//!
//! The bandit partitions the scalar axis `[lower, upper]` into equal ranges.
//! A range with reward `n` contributes `n` candidates per round, each with all
//! coordinates drawn uniformly inside that range. After scoring, the range
//! that produced the largest LCB gains one reward and the range that produced
//! the smallest loses one, never dropping below [`REWARD_FLOOR`].

use crate::error::{Error, Result};
use crate::gp::{GpModel, Posterior};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Smallest reward a range can hold, so every range keeps sampling.
pub const REWARD_FLOOR: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LcbConfig {
    pub weight_k: f64,
}

impl Default for LcbConfig {
    fn default() -> Self {
        Self { weight_k: 2.0 }
    }
}

impl LcbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_k >= 0.0 && self.weight_k.is_finite()) {
            return Err(Error::Input(format!(
                "LCB weight must be nonnegative, got {}",
                self.weight_k
            )));
        }
        Ok(())
    }
}

/// `mean - k * sqrt(variance)`.
pub fn lcb(post: &Posterior, cfg: &LcbConfig) -> f64 {
    post.mean - cfg.weight_k * post.variance.max(0.0).sqrt()
}

pub fn lcb_at(model: &GpModel, u: &[f64], cfg: &LcbConfig) -> Result<f64> {
    Ok(lcb(&model.posterior(u)?, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub num_ranges: usize,
    pub initial_reward: u32,
    /// Bandit rounds per acquisition step.
    pub mab_rounds: usize,
    /// Number of uniform random-search candidates per acquisition step.
    pub n_random: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_ranges: 5,
            initial_reward: 5,
            mab_rounds: 10,
            n_random: 100,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_ranges == 0 || self.initial_reward == 0 || self.mab_rounds == 0 || self.n_random == 0
        {
            return Err(Error::Input("sampler counts must all be at least 1".into()));
        }
        Ok(())
    }
}

/// A scored candidate and the bandit range it was drawn from (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub point: Vec<f64>,
    pub lcb: f64,
    pub range: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MabState {
    ranges: Vec<(f64, f64)>,
    rewards: Vec<u32>,
    rounds: u64,
}

impl MabState {
    pub fn new(cfg: &SamplerConfig, lower: f64, upper: f64) -> Result<Self> {
        cfg.validate()?;
        if !(lower < upper) {
            return Err(Error::Input("empty sampling interval".into()));
        }
        let n = cfg.num_ranges;
        let width = (upper - lower) / n as f64;
        let ranges = (0..n)
            .map(|k| {
                let lo = if k == 0 { lower } else { lower + width * k as f64 };
                let hi = if k + 1 == n { upper } else { lower + width * (k + 1) as f64 };
                (lo, hi)
            })
            .collect();
        Ok(Self {
            ranges,
            rewards: vec![cfg.initial_reward.max(REWARD_FLOOR); n],
            rounds: 0,
        })
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn rewards(&self) -> &[u32] {
        &self.rewards
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Credits `max_range` and debits `min_range`, clamping at the floor.
    pub fn apply_round(&mut self, max_range: usize, min_range: usize) {
        self.rewards[max_range] += 1;
        self.rewards[min_range] = self.rewards[min_range].saturating_sub(1).max(REWARD_FLOOR);
        self.rounds += 1;
    }

    /// Checks that the ranges tile `[lower, upper]` with no gap or overlap and
    /// every reward respects the floor.
    pub fn check_invariants(&self, lower: f64, upper: f64) -> Result<()> {
        if self.ranges.len() != self.rewards.len() || self.ranges.is_empty() {
            return Err(Error::Numerical("range/reward length mismatch".into()));
        }
        if self.ranges[0].0 != lower || self.ranges[self.ranges.len() - 1].1 != upper {
            return Err(Error::Numerical("ranges do not span the interval".into()));
        }
        for w in self.ranges.windows(2) {
            if w[0].1 != w[1].0 {
                return Err(Error::Numerical("ranges are not contiguous".into()));
            }
        }
        if self.ranges.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Numerical("degenerate range".into()));
        }
        if self.rewards.iter().any(|&r| r < REWARD_FLOOR) {
            return Err(Error::Numerical("reward below floor".into()));
        }
        Ok(())
    }
}

/// Everything drawn in one bandit round.
#[derive(Debug, Clone)]
pub struct MabRound {
    pub best: Candidate,
    pub drawn: Vec<Candidate>,
    pub max_range: usize,
    pub min_range: usize,
}

/// One bandit round with an arbitrary scoring function (smaller is better).
pub fn mab_round_scored<F>(state: &mut MabState, dim: usize, mut score: F, rng: &mut Rng) -> Result<MabRound>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut drawn = Vec::new();
    for (k, &(lo, hi)) in state.ranges.iter().enumerate() {
        for _ in 0..state.rewards[k] {
            let point: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
            let value = score(&point)?;
            drawn.push(Candidate {
                point,
                lcb: value,
                range: Some(k),
            });
        }
    }
    // Ties go to the earliest draw in both directions.
    let mut lo_idx = 0;
    let mut hi_idx = 0;
    for (j, c) in drawn.iter().enumerate() {
        if c.lcb < drawn[lo_idx].lcb {
            lo_idx = j;
        }
        if c.lcb > drawn[hi_idx].lcb {
            hi_idx = j;
        }
    }
    let max_range = drawn[hi_idx].range.expect("bandit candidate");
    let min_range = drawn[lo_idx].range.expect("bandit candidate");
    state.apply_round(max_range, min_range);
    Ok(MabRound {
        best: drawn[lo_idx].clone(),
        drawn,
        max_range,
        min_range,
    })
}

/// One bandit round scored by the LCB of `model`.
pub fn mab_round(state: &mut MabState, model: &GpModel, lcb_cfg: &LcbConfig, rng: &mut Rng) -> Result<MabRound> {
    mab_round_scored(state, model.dim(), |u| lcb_at(model, u, lcb_cfg), rng)
}

/// Runs `rounds` bandit rounds and returns the best candidate seen.
pub fn mab_search(
    state: &mut MabState,
    model: &GpModel,
    lcb_cfg: &LcbConfig,
    rounds: usize,
    rng: &mut Rng,
) -> Result<Candidate> {
    let mut best: Option<Candidate> = None;
    for _ in 0..rounds.max(1) {
        let round = mab_round(state, model, lcb_cfg, rng)?;
        if best.as_ref().is_none_or(|b| round.best.lcb < b.lcb) {
            best = Some(round.best);
        }
    }
    Ok(best.expect("at least one round"))
}

/// Draws `n_random` uniform points in `[lower, upper]^dim` and returns the
/// one with the smallest LCB (first one on ties).
pub fn random_search(
    model: &GpModel,
    cfg: &SamplerConfig,
    lcb_cfg: &LcbConfig,
    bounds: (f64, f64),
    rng: &mut Rng,
) -> Result<Candidate> {
    let dim = model.dim();
    let mut best: Option<Candidate> = None;
    for _ in 0..cfg.n_random.max(1) {
        let point: Vec<f64> = (0..dim).map(|_| rng.random_range(bounds.0..=bounds.1)).collect();
        let value = lcb_at(model, &point, lcb_cfg)?;
        if best.as_ref().is_none_or(|b| value < b.lcb) {
            best = Some(Candidate {
                point,
                lcb: value,
                range: None,
            });
        }
    }
    Ok(best.expect("at least one draw"))
}

/// Picks the candidate with the strictly smaller LCB, preferring the bandit
/// candidate on ties.
pub fn choose(mab: Candidate, rs: Candidate) -> Candidate {
    if rs.lcb < mab.lcb {
        rs
    } else {
        mab
    }
}

pub fn select_candidate(
    u_mab: &[f64],
    u_rs: &[f64],
    model: &GpModel,
    lcb_cfg: &LcbConfig,
) -> Result<Vec<f64>> {
    let a = lcb_at(model, u_mab, lcb_cfg)?;
    let b = lcb_at(model, u_rs, lcb_cfg)?;
    Ok(if b < a { u_rs.to_vec() } else { u_mab.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit, GpDataset, KernelConfig};
    use crate::rng;

    fn post(mean: f64, variance: f64) -> Posterior {
        Posterior { mean, variance }
    }

    fn model() -> GpModel {
        let ds = GpDataset::from_parts(
            vec![vec![0.1, 0.2], vec![0.8, 0.5], vec![0.4, 0.9], vec![0.6, 0.1]],
            vec![3.0, 1.0, 2.0, 0.5],
        )
        .unwrap();
        fit(ds, KernelConfig::default()).unwrap()
    }

    #[test]
    fn lcb_examples() {
        let k = |w| LcbConfig { weight_k: w };
        assert_eq!(lcb(&post(2.0, 1.0), &k(2.0)), 0.0);
        assert_eq!(lcb(&post(1.7, 0.0), &k(9.0)), 1.7);
        assert_eq!(lcb(&post(5.0, 4.0), &k(0.5)), 4.0);
    }

    #[test]
    fn reward_moves_between_ranges() {
        let cfg = SamplerConfig {
            num_ranges: 2,
            initial_reward: 3,
            ..SamplerConfig::default()
        };
        let mut st = MabState::new(&cfg, 0.0, 1.0).unwrap();
        st.apply_round(0, 1);
        assert_eq!(st.rewards(), &[4, 2]);
        st.apply_round(1, 1);
        assert_eq!(st.rewards(), &[4, 2]);
    }

    #[test]
    fn floor_clamps_repeated_losses() {
        // Enumerate three rounds in which range 1 keeps losing from reward 2:
        // 2 -> 1 -> 1 -> 1, while range 0 gains each time.
        let cfg = SamplerConfig {
            num_ranges: 2,
            initial_reward: 2,
            ..SamplerConfig::default()
        };
        let mut st = MabState::new(&cfg, 0.0, 1.0).unwrap();
        let expected = [[3, 1], [4, 1], [5, 1]];
        for want in expected {
            st.apply_round(0, 1);
            assert_eq!(st.rewards(), &want);
        }
        assert_eq!(st.rounds(), 3);
    }

    #[test]
    fn scored_round_credits_the_right_ranges() {
        let cfg = SamplerConfig {
            num_ranges: 2,
            initial_reward: 3,
            ..SamplerConfig::default()
        };
        let mut st = MabState::new(&cfg, 0.0, 1.0).unwrap();
        let mut r = rng::seeded(0);
        // Score = -x: the largest score comes from the low range, smallest from the high.
        let round = mab_round_scored(&mut st, 1, |u| Ok(-u[0]), &mut r).unwrap();
        assert_eq!((round.max_range, round.min_range), (0, 1));
        assert_eq!(st.rewards(), &[4, 2]);
        assert_eq!(round.drawn.len(), 6);
    }

    #[test]
    fn round_returns_minimum_of_its_draws() {
        let m = model();
        let cfg = SamplerConfig::default();
        let lc = LcbConfig::default();
        let mut st = MabState::new(&cfg, 0.0, 1.0).unwrap();
        let mut r = rng::seeded(4);
        for _ in 0..20 {
            let round = mab_round(&mut st, &m, &lc, &mut r).unwrap();
            for c in &round.drawn {
                let (lo, hi) = st.ranges()[c.range.unwrap()];
                assert!(c.point.iter().all(|x| (lo..=hi).contains(x)));
                assert!(round.best.lcb <= lcb_at(&m, &c.point, &lc).unwrap());
            }
            st.check_invariants(0.0, 1.0).unwrap();
        }
    }

    #[test]
    fn random_search_picks_minimum() {
        let m = model();
        let lc = LcbConfig::default();
        let cfg = SamplerConfig {
            n_random: 50,
            ..SamplerConfig::default()
        };
        let best = random_search(&m, &cfg, &lc, (0.0, 1.0), &mut rng::seeded(8)).unwrap();
        // Replay the same stream and re-score each draw.
        let mut r = rng::seeded(8);
        for _ in 0..50 {
            let p: Vec<f64> = (0..2).map(|_| r.random_range(0.0..=1.0)).collect();
            assert!(best.lcb <= lcb_at(&m, &p, &lc).unwrap());
        }
    }

    #[test]
    fn single_random_draw_is_returned() {
        let m = model();
        let cfg = SamplerConfig {
            n_random: 1,
            ..SamplerConfig::default()
        };
        let best = random_search(&m, &cfg, &LcbConfig::default(), (0.0, 1.0), &mut rng::seeded(2)).unwrap();
        let mut r = rng::seeded(2);
        let p: Vec<f64> = (0..2).map(|_| r.random_range(0.0..=1.0)).collect();
        assert_eq!(best.point, p);
    }

    #[test]
    fn degenerate_interval_gives_that_point() {
        let m = model();
        let cfg = SamplerConfig {
            n_random: 10,
            ..SamplerConfig::default()
        };
        let best = random_search(&m, &cfg, &LcbConfig::default(), (0.3, 0.3), &mut rng::seeded(2)).unwrap();
        assert_eq!(best.point, vec![0.3, 0.3]);
    }

    #[test]
    fn selection_follows_lcb_with_bandit_tie_break() {
        let c = |v: f64, tag: f64| Candidate {
            point: vec![tag],
            lcb: v,
            range: None,
        };
        assert_eq!(choose(c(1.0, 0.0), c(2.0, 1.0)).point, vec![0.0]);
        assert_eq!(choose(c(2.0, 0.0), c(1.0, 1.0)).point, vec![1.0]);
        assert_eq!(choose(c(1.0, 0.0), c(1.0, 1.0)).point, vec![0.0]);

        let m = model();
        let lc = LcbConfig::default();
        let a = [0.8, 0.5];
        let b = [0.1, 0.9];
        let chosen = select_candidate(&a, &b, &m, &lc).unwrap();
        let la = lcb_at(&m, &a, &lc).unwrap();
        let lb = lcb_at(&m, &b, &lc).unwrap();
        assert_eq!(lcb_at(&m, &chosen, &lc).unwrap(), la.min(lb));
        assert_eq!(select_candidate(&a, &a, &m, &lc).unwrap(), a.to_vec());
    }

    #[test]
    fn partition_is_exact() {
        let cfg = SamplerConfig {
            num_ranges: 7,
            ..SamplerConfig::default()
        };
        let st = MabState::new(&cfg, 0.0, 1.0).unwrap();
        st.check_invariants(0.0, 1.0).unwrap();
        assert!(MabState::new(&cfg, 1.0, 1.0).is_err());
        assert!(MabState::new(&SamplerConfig { num_ranges: 0, ..cfg }, 0.0, 1.0).is_err());
    }
}
