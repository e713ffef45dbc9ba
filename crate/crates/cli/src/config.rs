//! Experiment configuration files.
//!
//! ```toml
//! [scheme]
//! kind = "mlp"
//! hidden = [32, 32]
//! epochs = 30
//!
//! [unlearner]
//! method = "amnesiac"
//!
//! [distinguisher]
//! kind = "kld"
//!
//! [game]
//! trials = 128
//! forget_size = 30
//!
//! [game.data]
//! classes = 10
//!
//! [sweep]
//! forget_sizes = [3, 6, 30, 60, 300]
//!
//! [output]
//! dir = "results"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unlearn_arena::distinguishers::DistinguisherKind;
use unlearn_arena::game::{DataSpec, DistinguisherConfig, GameConfig, Mode};
use unlearn_arena::schemes::{SchemeConfig, SchemeId};
use unlearn_arena::unlearners::{Method, UnlearnerConfig};

use crate::CliError;

/// Environment variable that overrides `game.master_seed`.
pub const SEED_ENV: &str = "UNLEARN_ARENA_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeId,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub k: usize,
    pub ridge: f64,
    pub sigma_objective: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let t = SchemeConfig::default();
        Self {
            kind: SchemeId::Mlp,
            hidden: vec![32, 32],
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            k: t.k,
            ridge: t.ridge,
            sigma_objective: t.sigma_objective,
        }
    }
}

impl SchemeSection {
    pub fn training(&self) -> SchemeConfig {
        SchemeConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            k: self.k,
            ridge: self.ridge,
            sigma_objective: self.sigma_objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub mode: Mode,
    pub trials: usize,
    pub security_param: u32,
    pub utility_gap: f64,
    pub query_budget: u64,
    pub master_seed: u64,
    pub forget_size: usize,
    pub data: DataSpec,
}

impl Default for GameSection {
    fn default() -> Self {
        let g = GameConfig::default();
        Self {
            mode: g.mode,
            trials: g.trials,
            security_param: g.security_param,
            utility_gap: g.utility_gap,
            query_budget: g.query_budget,
            master_seed: g.master_seed,
            forget_size: g.forget_size,
            data: g.data,
        }
    }
}

/// The `ln(1 + 2⁻³²)` privacy level of the utility-collapse demonstration.
pub fn negligible_epsilon() -> f64 {
    (2f64.powi(-32)).ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub methods: Vec<Method>,
    pub distinguishers: Vec<DistinguisherKind>,
    pub forget_sizes: Vec<usize>,
    pub sigmas: Vec<f64>,
    /// Per-query privacy levels of the DP demonstration.
    pub dp_epsilons: Vec<f64>,
    pub dp_repeats: usize,
    pub dp_queries: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            methods: vec![Method::Amnesiac, Method::BadTeacher, Method::Ssd],
            distinguishers: vec![DistinguisherKind::Kld],
            forget_sizes: vec![3, 6, 30, 60, 300],
            sigmas: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            dp_epsilons: vec![1e2, 1.0, 1e-2, negligible_epsilon()],
            dp_repeats: 16,
            dp_queries: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Prefix of every experiment id written by this config.
    pub name: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            name: "run".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeSection,
    pub unlearner: UnlearnerConfig,
    pub distinguisher: DistinguisherConfig,
    pub game: GameSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Command-line overrides applied after parsing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    /// `--trials` from the caller plus the seed from [`SEED_ENV`], if set.
    pub fn from_env(trials: Option<usize>) -> Result<Self, CliError> {
        let seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| CliError::Config {
                origin: SEED_ENV.into(),
                message: format!("`{v}` is not an unsigned integer seed"),
            })?),
            Err(_) => None,
        };
        Ok(Self { trials, seed })
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            origin: origin.into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(t) = o.trials {
            self.game.trials = t;
        }
        if let Some(s) = o.seed {
            self.game.master_seed = s;
        }
    }

    /// The single game this config describes.
    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            mode: self.game.mode,
            scheme: self.scheme.kind,
            hidden: self.scheme.hidden.clone(),
            training: self.scheme.training(),
            unlearner: self.unlearner.clone(),
            distinguisher: self.distinguisher.clone(),
            data: self.game.data.clone(),
            forget_size: self.game.forget_size,
            trials: self.game.trials,
            security_param: self.game.security_param,
            utility_gap: self.game.utility_gap,
            query_budget: self.game.query_budget,
            master_seed: self.game.master_seed,
        }
    }

    /// Validates the game and the sweep axes before anything runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| CliError::Config {
            origin: field.into(),
            message: why,
        };
        self.game_config()
            .validate()
            .map_err(|e| bad("config", e.to_string()))?;
        if self.sweep.forget_sizes.contains(&0) {
            return Err(bad(
                "sweep.forget_sizes",
                "the forget set must be non-empty".into(),
            ));
        }
        if let Some(s) = self
            .sweep
            .sigmas
            .iter()
            .find(|s| !(**s >= 0.0 && s.is_finite()))
        {
            return Err(bad(
                "sweep.sigmas",
                format!("{s} is not a non-negative magnitude"),
            ));
        }
        if let Some(e) = self
            .sweep
            .dp_epsilons
            .iter()
            .find(|e| !(**e > 0.0 && e.is_finite()))
        {
            return Err(bad(
                "sweep.dp_epsilons",
                format!("{e} is not a positive privacy level"),
            ));
        }
        if self.sweep.dp_repeats == 0 || self.sweep.dp_queries == 0 {
            return Err(bad(
                "sweep",
                "dp_repeats and dp_queries must be positive".into(),
            ));
        }
        Ok(())
    }
}
