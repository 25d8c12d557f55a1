//! Run configuration: one TOML file with a section per stage. Every field has
//! a default, so an empty file is a valid configuration.
//!
//! ```toml
//! version = 1
//! model = "seir"
//! seed = 7
//! out_dir = "out"
//!
//! [params]
//! tf = 50
//!
//! [bo]
//! window_dim = 5
//! [bo.adam]
//! max_iters = 500
//!
//! [settings]
//! mode = "reference"
//! model = "seir"
//! betas = [0.25]
//!
//! [target]
//! label = "holdout"
//! beta = 0.25
//! state = { model = "seir", s = 0.5, e = 0.3, i = 0.2, r = 0.0 }
//! ```

use crate::benchmarks::FunctionKind;
use crate::bo::BoConfig;
use crate::data::{holdout_setting, InitialSetting, NoiseConfig, SettingsPlan};
use crate::epidemic::{EpidemicParams, ModelKind};
use crate::error::{Error, Result};
use crate::rnn::RnnConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub functions: Vec<FunctionKind>,
    pub dimension: usize,
    pub runs: usize,
    /// Record wall time in the results table (makes it run-dependent).
    pub timing: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            functions: FunctionKind::ALL.to_vec(),
            dimension: 2,
            runs: 10,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub model: ModelKind,
    /// When set, overrides the seeds of every sub-configuration.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub params: EpidemicParams,
    pub bo: BoConfig,
    pub rnn: RnnConfig,
    pub noise: NoiseConfig,
    /// Settings harvested by `collect`; defaults to the reference states.
    pub settings: Option<SettingsPlan>,
    /// Setting used by `simulate`, `optimize` and `predict`; defaults to the
    /// held-out state.
    pub target: Option<InitialSetting>,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            model: ModelKind::Seir,
            seed: None,
            out_dir: PathBuf::from("out"),
            params: EpidemicParams::default(),
            bo: BoConfig::default(),
            rnn: RnnConfig::default(),
            noise: NoiseConfig::default(),
            settings: None,
            target: None,
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {}", self.version)));
        }
        wrap(self.params.validate())?;
        wrap(self.bo.validate())?;
        wrap(self.rnn.validate())?;
        if self.noise.replications == 0 {
            return Err(Error::Config("noise.replications must be at least 1".into()));
        }
        if let Some(t) = &self.target {
            wrap(t.validate())?;
            if t.kind() != self.model {
                return Err(Error::Config(format!("target is a {} state but model is {}", t.kind(), self.model)));
            }
        }
        if self.benchmark.runs == 0 || self.benchmark.dimension == 0 {
            return Err(Error::Config("benchmark runs and dimension must be positive".into()));
        }
        Ok(())
    }

    /// Copy with the top-level seed pushed into every sub-configuration.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(seed) = self.seed {
            c.bo.seed = seed;
            c.rnn.seed = seed;
            c.noise.seed = seed;
            if let Some(SettingsPlan::Random { seed: s, .. }) = &mut c.settings {
                *s = seed;
            }
        }
        c
    }

    pub fn target_setting(&self) -> InitialSetting {
        self.target
            .clone()
            .unwrap_or_else(|| holdout_setting(self.model, self.params.beta))
    }

    pub fn settings_plan(&self) -> SettingsPlan {
        self.settings.clone().unwrap_or_else(|| SettingsPlan::Reference {
            model: self.model,
            betas: vec![self.params.beta],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn module_doc_example_parses() {
        let text = "version = 1\nmodel = \"seir\"\nseed = 7\nout_dir = \"out\"\n[params]\ntf = 50\n[bo]\nwindow_dim = 5\n\
                    [bo.adam]\nmax_iters = 500\n[settings]\nmode = \"reference\"\nmodel = \"seir\"\nbetas = [0.25]\n\
                    [target]\nlabel = \"holdout\"\nbeta = 0.25\nstate = { model = \"seir\", s = 0.5, e = 0.3, i = 0.2, r = 0.0 }\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.params.tf, 50);
        assert_eq!(cfg.bo.adam.max_iters, 500);
        assert_eq!(cfg.bo.n_iters, 50);
        let r = cfg.resolved();
        assert_eq!((r.bo.seed, r.rnn.seed, r.noise.seed), (7, 7, 7));
        assert_eq!(cfg.target_setting(), holdout_setting(ModelKind::Seir, 0.25));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            settings: Some(SettingsPlan::Random {
                model: ModelKind::Sis,
                count: 3,
                seed: 1,
                betas: vec![0.3],
            }),
            model: ModelKind::Sis,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "version = 2",
            "[rnn]\nnum_layers = 9",
            "[bo]\nn_init = 0",
            "typo = 1",
            "model = \"sir\"",
            "model = \"sis\"\n[target]\nlabel = \"a\"\nbeta = 0.2\nstate = { model = \"seir\", s = 1.0, e = 0.0, i = 0.0, r = 0.0 }",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/x.toml")), Err(Error::Config(_))));
    }
}
