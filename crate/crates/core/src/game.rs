//! The computational-unlearning game: challenger, adversary, trials and reports.
//!
//! Bit convention: the challenger flips `b`. With `b = 1` it presents
//! `[M_u, M_c]`, with `b = 0` it presents `[M_c, M_u]`. The adversary answers
//! `b' = 1` exactly when it believes the first position holds the unlearned model.
//!
//! Each trial is a pure function of `(config, trial index)`: every random
//! choice draws from a stream derived by label from the master seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    make_blobs, make_regression, select_forget, Dataset, ForgetStrategy, SplitPlan, TaskKind,
};
use crate::distinguishers::{
    calibrate_rule, decide, exact_match_guess, kld_score, mia_score, train_attack_model,
    AttackModel, DecisionRule, DistinguisherKind, Guess, Predictor, ScorePair, KLD_NOISE_VARIANCE,
};
use crate::error::{Error, Result};
use crate::numerics::{jeffreys_interval, CredibleInterval, RngStream};
use crate::schemes::{
    init, learn_with, utility, Architecture, CostMeter, ModelState, SchemeConfig, SchemeId,
    Tracking, TrainingTranscript,
};
use crate::unlearners::{
    unlearn, unlearn_retrain, wrap_dp_oracle, InferenceOracle, Method, UnlearnRequest,
    UnlearnerConfig,
};

/// Level of the reported credible interval.
pub const CREDIBLE_LEVEL: f64 = 0.95;
/// A report with more constraint-failing trials than this fraction is invalid.
pub const MAX_CONSTRAINT_FAILURE_RATE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    WhiteBox,
    BlackBox,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::WhiteBox => "white-box",
            Mode::BlackBox => "black-box",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Blobs,
    Regression,
}

/// The seeded generator the adversary uses to choose `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub kind: DataKind,
    pub classes: usize,
    pub dims: usize,
    /// Per-coordinate standard deviation of the blobs.
    pub spread: f64,
    /// Label noise standard deviation for regression.
    pub noise: f64,
    pub train: usize,
    pub test: usize,
    /// Held-out examples available to the adversary for shadow models.
    pub population: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            kind: DataKind::Blobs,
            classes: 10,
            dims: 8,
            spread: 1.0,
            noise: 0.5,
            train: 1000,
            test: 500,
            population: 1000,
        }
    }
}

impl DataSpec {
    pub fn task(&self) -> TaskKind {
        match self.kind {
            DataKind::Blobs => TaskKind::Classification {
                num_classes: self.classes,
            },
            DataKind::Regression => TaskKind::Regression,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.test + self.population
    }

    /// All examples plus a random train/test/population split.
    pub fn generate(&self, rng: &RngStream) -> Result<(Dataset, SplitPlan)> {
        let total = self.total();
        let data = match self.kind {
            DataKind::Blobs => {
                let per_class = total.div_ceil(self.classes.max(1));
                make_blobs(
                    self.classes,
                    per_class,
                    self.dims,
                    self.spread,
                    &mut rng.derive_named("blobs"),
                )?
            }
            DataKind::Regression => {
                make_regression(
                    total,
                    self.dims,
                    self.noise,
                    &mut rng.derive_named("regression"),
                )?
                .0
            }
        };
        let plan = SplitPlan::random(
            data.ids(),
            self.train,
            self.test,
            self.population,
            &mut rng.derive_named("split"),
        )?;
        Ok((data, plan))
    }
}

/// When the adversary calibrates its decision rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationScope {
    /// Once per game, from rehearsal games on its own models and forget sets.
    PerGame,
    /// In every trial, from the challenger's original model and forget set.
    PerTrial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistinguisherConfig {
    pub kind: DistinguisherKind,
    pub kld_noise_variance: f64,
    pub shadow_count: usize,
    pub calibration_trials: usize,
    pub calibration: CalibrationScope,
}

impl Default for DistinguisherConfig {
    fn default() -> Self {
        Self {
            kind: DistinguisherKind::Kld,
            kld_noise_variance: KLD_NOISE_VARIANCE,
            shadow_count: 8,
            calibration_trials: 16,
            calibration: CalibrationScope::PerGame,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub mode: Mode,
    pub scheme: SchemeId,
    /// Hidden-layer widths of the MLP.
    pub hidden: Vec<usize>,
    pub training: SchemeConfig,
    pub unlearner: UnlearnerConfig,
    pub distinguisher: DistinguisherConfig,
    pub data: DataSpec,
    pub forget_size: usize,
    pub trials: usize,
    pub security_param: u32,
    pub utility_gap: f64,
    pub query_budget: u64,
    pub master_seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            mode: Mode::WhiteBox,
            scheme: SchemeId::Mlp,
            hidden: vec![32, 32],
            training: SchemeConfig::default(),
            unlearner: UnlearnerConfig::default(),
            distinguisher: DistinguisherConfig::default(),
            data: DataSpec::default(),
            forget_size: 30,
            trials: 128,
            security_param: 128,
            utility_gap: 0.05,
            query_budget: 10_000,
            master_seed: 0,
        }
    }
}

fn invalid(field: &str, why: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{field}: {why}"))
}

impl GameConfig {
    pub fn architecture(&self) -> Architecture {
        match self.data.kind {
            DataKind::Regression => Architecture::regression(self.data.dims),
            DataKind::Blobs => Architecture::classifier(
                self.data.dims,
                self.data.classes,
                if self.scheme == SchemeId::Mlp {
                    self.hidden.clone()
                } else {
                    Vec::new()
                },
            ),
        }
    }

    /// Checks every field and every cross-field compatibility rule.
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.unlearner.validate()?;
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(self.utility_gap > 0.0 && self.utility_gap.is_finite()) {
            return Err(invalid("utility_gap", "must be positive"));
        }
        if self.forget_size == 0 {
            return Err(invalid("forget_size", "must be at least 1"));
        }
        if self.forget_size >= self.data.train {
            return Err(invalid(
                "forget_size",
                "must be smaller than the training set",
            ));
        }
        if self.data.dims == 0 || self.data.train == 0 || self.data.test == 0 {
            return Err(invalid("data", "dims, train and test must be positive"));
        }
        if self.query_budget == 0 {
            return Err(invalid("query_budget", "must be positive"));
        }
        if self.scheme == SchemeId::Mlp && self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be positive"));
        }
        let regression = self.scheme == SchemeId::LinearRegression;
        match (self.data.kind, regression) {
            (DataKind::Regression, false) => {
                return Err(invalid(
                    "data.kind",
                    "regression data needs the linear-regression scheme",
                ))
            }
            (DataKind::Blobs, true) => {
                return Err(invalid(
                    "data.kind",
                    "linear-regression needs regression data",
                ))
            }
            (DataKind::Blobs, false) if self.data.classes < 2 => {
                return Err(invalid("data.classes", "need at least 2 classes"))
            }
            (DataKind::Regression, true)
                if self.data.train <= self.data.dims && self.training.ridge == 0.0 =>
            {
                return Err(invalid(
                    "data.train",
                    "least squares needs more rows than dimensions at zero ridge",
                ))
            }
            _ => {}
        }
        let method = self.unlearner.method;
        let fits = match method {
            Method::KnnDelete => self.scheme == SchemeId::Knn,
            Method::LinregDowndate => regression,
            Method::NewtonRemoval => {
                matches!(self.scheme, SchemeId::Logistic | SchemeId::LinearRegression)
            }
            Method::Amnesiac | Method::BadTeacher | Method::Ssd | Method::DpOracle => {
                self.scheme.is_parametric_classifier()
            }
            Method::Retrain => true,
        };
        if !fits {
            return Err(invalid(
                "unlearner.method",
                format!("{method} does not apply to the {} scheme", self.scheme),
            ));
        }
        let kind = self.distinguisher.kind;
        if kind == DistinguisherKind::ExactMatch && self.mode != Mode::WhiteBox {
            return Err(invalid(
                "distinguisher.kind",
                "exact-match needs white-box access",
            ));
        }
        if method == Method::DpOracle && self.mode != Mode::BlackBox {
            return Err(invalid(
                "unlearner.method",
                "dp-oracle only protects black-box inference",
            ));
        }
        if kind != DistinguisherKind::ExactMatch {
            if regression {
                return Err(invalid(
                    "distinguisher.kind",
                    format!("{kind} needs a classifier"),
                ));
            }
            if self.distinguisher.calibration_trials < crate::distinguishers::MIN_CALIBRATION_TRIALS
            {
                return Err(invalid(
                    "distinguisher.calibration_trials",
                    format!(
                        "must be at least {}",
                        crate::distinguishers::MIN_CALIBRATION_TRIALS
                    ),
                ));
            }
            if !(self.distinguisher.kld_noise_variance >= 0.0
                && self.distinguisher.kld_noise_variance.is_finite())
            {
                return Err(invalid(
                    "distinguisher.kld_noise_variance",
                    "must be non-negative",
                ));
            }
        }
        if kind == DistinguisherKind::Mia
            && (self.distinguisher.shadow_count < 2 || self.data.population < 4)
        {
            return Err(invalid(
                "distinguisher.shadow_count",
                "mia needs at least 2 shadows and 4 population examples",
            ));
        }
        let black_box_queries = 4 * self.forget_size as u64;
        if self.mode == Mode::BlackBox && self.query_budget < black_box_queries {
            return Err(invalid(
                "query_budget",
                format!("must cover the {black_box_queries} queries scoring needs"),
            ));
        }
        Ok(())
    }
}

/// Anti-trivial-solution checks on one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintFlags {
    pub utility_gap_ok: bool,
    pub cost_ok: bool,
}

impl ConstraintFlags {
    pub fn ok(&self) -> bool {
        self.utility_gap_ok && self.cost_ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utilities {
    pub original: f64,
    pub control: f64,
    pub unlearned: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Costs {
    pub learn: u64,
    pub unlearn: u64,
    pub retrain: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub bit: u8,
    pub guess: u8,
    pub win: bool,
    pub abstained: bool,
    pub scores: Option<ScorePair>,
    pub score_unlearned: Option<f64>,
    pub score_control: Option<f64>,
    pub utilities: Utilities,
    pub costs: Costs,
    pub flags: ConstraintFlags,
    pub forget_size: usize,
}

/// `|util(M_o) − util(M_c)| < ε_util` and `cost(unlearn) < cost(retrain)`.
pub fn check_constraints(record: &TrialRecord, utility_gap: f64) -> ConstraintFlags {
    ConstraintFlags {
        utility_gap_ok: (record.utilities.original - record.utilities.control).abs() < utility_gap,
        cost_ok: record.costs.unlearn < record.costs.retrain,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortedTrial {
    pub trial: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialOutcome {
    Completed(TrialRecord),
    Aborted(AbortedTrial),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub utility_gap_failures: usize,
    pub cost_failures: usize,
    pub failing_trials: usize,
    pub invalid_game: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub wins: u64,
    pub trials: u64,
    pub success_rate: f64,
    pub interval: CredibleInterval,
    pub significant: bool,
    pub abstentions: u64,
    pub constraints: ConstraintSummary,
    pub rule: Option<DecisionRule>,
    pub attack_accuracy: Option<f64>,
    pub aborted: Vec<AbortedTrial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub config: GameConfig,
    pub summary: GameSummary,
    pub records: Vec<TrialRecord>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl GameReport {
    pub fn scores_unlearned(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.score_unlearned)
            .collect()
    }

    pub fn scores_control(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.score_control)
            .collect()
    }

    pub fn mean_utilities(&self) -> Utilities {
        Utilities {
            original: mean_of(self.records.iter().map(|r| r.utilities.original)),
            control: mean_of(self.records.iter().map(|r| r.utilities.control)),
            unlearned: mean_of(self.records.iter().map(|r| r.utilities.unlearned)),
        }
    }

    /// Mean costs, rounded down.
    pub fn mean_costs(&self) -> Costs {
        let n = self.records.len().max(1) as u64;
        let sum = |f: fn(&TrialRecord) -> u64| self.records.iter().map(f).sum::<u64>() / n;
        Costs {
            learn: sum(|r| r.costs.learn),
            unlearn: sum(|r| r.costs.unlearn),
            retrain: sum(|r| r.costs.retrain),
        }
    }

    /// One JSON object per trial, then one summary object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        #[derive(Serialize)]
        struct Tail<'a> {
            summary: &'a GameSummary,
            config: &'a GameConfig,
        }
        out.push_str(
            &serde_json::to_string(&Tail {
                summary: &self.summary,
                config: &self.config,
            })
            .expect("summary serializes"),
        );
        out.push('\n');
        out
    }
}

/// Whether trials run on the rayon pool or one after another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

/// Fixed per-game material: the data, its split, and the adversary's preparation.
pub struct Arena {
    pub cfg: GameConfig,
    pub arch: Architecture,
    pub data: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub population: Dataset,
    master: RngStream,
}

impl Arena {
    pub fn new(cfg: &GameConfig) -> Result<Arena> {
        cfg.validate()?;
        let master = RngStream::new(cfg.master_seed, 0);
        let (data, plan) = cfg.data.generate(&master.derive_named("adversary-data"))?;
        Ok(Arena {
            arch: cfg.architecture(),
            train: data.subset(&plan.train)?,
            test: data.subset(&plan.test)?,
            population: data.subset(&plan.population)?,
            data,
            cfg: cfg.clone(),
            master,
        })
    }

    fn challenger(&self, trial: usize) -> RngStream {
        self.master.derive_named("challenger").derive(trial as u64)
    }

    fn adversary(&self) -> RngStream {
        self.master.derive_named("adversary")
    }

    fn needs_transcript(&self) -> bool {
        self.cfg.unlearner.method == Method::Amnesiac
    }

    /// `learn(init(λ), D)` from two labelled children of `rng`.
    fn train_original(
        &self,
        rng: &RngStream,
    ) -> Result<(ModelState, TrainingTranscript, CostMeter)> {
        let fresh = init(
            self.cfg.scheme,
            &self.arch,
            self.cfg.security_param,
            &mut rng.derive_named("init-original"),
        )?;
        let tracking = if self.needs_transcript() {
            Tracking::Record
        } else {
            Tracking::Skip
        };
        learn_with(
            &fresh,
            &self.train,
            &self.cfg.training,
            &mut rng.derive_named("learn-original"),
            tracking,
        )
    }

    fn pick_forget(&self, rng: &RngStream) -> Result<Vec<u64>> {
        Ok(select_forget(
            &self.data,
            self.train.ids(),
            ForgetStrategy::RandomSubset,
            self.cfg.forget_size,
            &mut rng.derive_named("forget"),
        )?
        .forget_ids)
    }

    fn request<'a>(
        &'a self,
        original: &'a ModelState,
        transcript: &'a TrainingTranscript,
        forget: &'a [u64],
    ) -> UnlearnRequest<'a> {
        UnlearnRequest {
            original,
            transcript,
            train: &self.train,
            forget,
            scheme_cfg: &self.cfg.training,
            security_param: self.cfg.security_param,
        }
    }

    /// What the adversary queries: the model itself, or an oracle around it.
    fn present(&self, state: &ModelState, rng: RngStream) -> Result<Box<dyn Predictor>> {
        match self.cfg.mode {
            Mode::WhiteBox => Ok(Box::new(state.clone())),
            Mode::BlackBox if self.cfg.unlearner.method == Method::DpOracle => {
                Ok(Box::new(wrap_dp_oracle(
                    state.clone(),
                    self.cfg.unlearner.dp_epsilon,
                    self.cfg.unlearner.dp_delta,
                    self.cfg.query_budget,
                    rng,
                )?))
            }
            Mode::BlackBox => Ok(Box::new(InferenceOracle::new(
                state.clone(),
                self.cfg.query_budget,
            ))),
        }
    }

    /// Scores each candidate against the original model.
    fn score(
        &self,
        original: &mut dyn Predictor,
        candidate: &mut dyn Predictor,
        forget: &Dataset,
        noise: &RngStream,
        attack: Option<&AttackModel>,
    ) -> Result<f64> {
        match self.cfg.distinguisher.kind {
            DistinguisherKind::Kld => kld_score(
                original,
                candidate,
                forget,
                self.cfg.distinguisher.kld_noise_variance,
                noise,
            ),
            DistinguisherKind::Mia => mia_score(
                candidate,
                forget,
                attack.expect("attack trained for mia games"),
            ),
            DistinguisherKind::ExactMatch => unreachable!("exact match does not score"),
        }
    }

    /// One self-simulated game: scores of an unlearned model and of a control.
    fn rehearse(&self, k: usize, attack: Option<&AttackModel>) -> Result<(f64, f64)> {
        let rng = self.adversary().derive_named("rehearsal").derive(k as u64);
        let (original, transcript, _) = self.train_original(&rng)?;
        let forget_ids = self.pick_forget(&rng)?;
        let req = self.request(&original, &transcript, &forget_ids);
        let (unlearned, _) = unlearn(&self.cfg.unlearner, &req, &mut rng.derive_named("unlearn"))?;
        let retain = self.train.subset(&req.retain_ids())?;
        let (control, _) = unlearn_retrain(
            &original,
            &retain,
            &self.cfg.training,
            self.cfg.security_param,
            &mut rng.derive_named("control"),
        )?;
        self.score_both(&original, [&unlearned, &control], &forget_ids, &rng, attack)
            .map(|s| (s[0], s[1]))
    }

    fn score_both(
        &self,
        original: &ModelState,
        models: [&ModelState; 2],
        forget_ids: &[u64],
        rng: &RngStream,
        attack: Option<&AttackModel>,
    ) -> Result<[f64; 2]> {
        let forget = self.train.subset(forget_ids)?;
        let noise = rng.derive_named("kld-noise");
        let mut orig = self.present(original, rng.derive_named("oracle-original"))?;
        let mut out = [0.0; 2];
        for (slot, (model, label)) in out
            .iter_mut()
            .zip(models.into_iter().zip(["oracle-first", "oracle-second"]))
        {
            let mut candidate = self.present(model, rng.derive_named(label))?;
            *slot = self.score(orig.as_mut(), candidate.as_mut(), &forget, &noise, attack)?;
        }
        Ok(out)
    }

    /// Calibrates from `calibration_trials` rehearsal games; rehearsals that
    /// abort are skipped and the fallback rule is used if too few remain.
    pub fn calibrate_per_game(&self, attack: Option<&AttackModel>) -> Result<DecisionRule> {
        let mut unlearned = Vec::new();
        let mut control = Vec::new();
        for k in 0..self.cfg.distinguisher.calibration_trials {
            match self.rehearse(k, attack) {
                Ok((u, c)) => {
                    unlearned.push(u);
                    control.push(c);
                }
                Err(Error::SingularDowndate { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if unlearned.len() < crate::distinguishers::MIN_CALIBRATION_TRIALS {
            return Ok(DecisionRule::fallback());
        }
        calibrate_rule(&unlearned, &control)
    }

    /// Calibrates on the challenger's original model and forget set.
    fn calibrate_in_trial(
        &self,
        original: &ModelState,
        transcript: &TrainingTranscript,
        forget_ids: &[u64],
        rng: &RngStream,
        attack: Option<&AttackModel>,
    ) -> Result<DecisionRule> {
        let req = self.request(original, transcript, forget_ids);
        let retain = self.train.subset(&req.retain_ids())?;
        let mut unlearned = Vec::new();
        let mut control = Vec::new();
        let mut deterministic: Option<ModelState> = None;
        for k in 0..self.cfg.distinguisher.calibration_trials {
            let r = rng.derive_named("calibration").derive(k as u64);
            let u = match (&deterministic, self.cfg.unlearner.randomized()) {
                (Some(u), false) => u.clone(),
                _ => {
                    let (u, _) =
                        unlearn(&self.cfg.unlearner, &req, &mut r.derive_named("unlearn"))?;
                    if !self.cfg.unlearner.randomized() {
                        deterministic = Some(u.clone());
                    }
                    u
                }
            };
            let (c, _) = unlearn_retrain(
                original,
                &retain,
                &self.cfg.training,
                self.cfg.security_param,
                &mut r.derive_named("control"),
            )?;
            let s = self.score_both(original, [&u, &c], forget_ids, &r, attack)?;
            unlearned.push(s[0]);
            control.push(s[1]);
        }
        calibrate_rule(&unlearned, &control)
    }

    pub fn train_attack(&self) -> Result<AttackModel> {
        train_attack_model(
            self.cfg.scheme,
            &self.arch,
            &self.cfg.training,
            &self.population,
            self.cfg.distinguisher.shadow_count,
            self.cfg.security_param,
            &self.adversary().derive_named("shadows"),
        )
    }

    /// Plays trial `index`.
    pub fn run_trial(&self, index: usize, prep: &AdversaryPrep) -> Result<TrialOutcome> {
        let ch = self.challenger(index);
        let adv = self.adversary().derive_named("trial").derive(index as u64);

        let (original, transcript, learn_cost) = self.train_original(&ch)?;
        let forget_ids = self.pick_forget(&adv)?;
        let req = self.request(&original, &transcript, &forget_ids);
        let (unlearned, unlearn_cost) =
            match unlearn(&self.cfg.unlearner, &req, &mut ch.derive_named("unlearn")) {
                Ok(v) => v,
                Err(e @ Error::SingularDowndate { .. }) => {
                    return Ok(TrialOutcome::Aborted(AbortedTrial {
                        trial: index,
                        reason: e.to_string(),
                    }))
                }
                Err(e) => return Err(e),
            };
        let retain = self.train.subset(&req.retain_ids())?;
        let (control, retrain_cost) = unlearn_retrain(
            &original,
            &retain,
            &self.cfg.training,
            self.cfg.security_param,
            &mut ch.derive_named("control"),
        )?;

        let b = ch.derive_named("bit").bit();
        let presented = if b {
            [&unlearned, &control]
        } else {
            [&control, &unlearned]
        };

        let (guess, scores) = match self.cfg.distinguisher.kind {
            DistinguisherKind::ExactMatch => (
                exact_match_guess(&self.cfg.unlearner, &req, presented)?,
                None,
            ),
            kind => {
                let rule = match (&prep.rule, self.cfg.distinguisher.calibration) {
                    (Some(rule), CalibrationScope::PerGame) => rule.clone(),
                    _ => self.calibrate_in_trial(
                        &original,
                        &transcript,
                        &forget_ids,
                        &adv,
                        prep.attack.as_ref(),
                    )?,
                };
                let s = self.score_both(
                    &original,
                    presented,
                    &forget_ids,
                    &adv,
                    prep.attack.as_ref(),
                )?;
                let pair = ScorePair {
                    first: s[0],
                    second: s[1],
                    kind,
                };
                (decide(&rule, &pair), Some(pair))
            }
        };
        let abstained = guess == Guess::Abstain;
        let guess_bit = match guess {
            Guess::First => true,
            Guess::Second => false,
            Guess::Abstain => adv.derive_named("coin").bit(),
        };
        let (score_unlearned, score_control) = match scores {
            Some(p) if b => (Some(p.first), Some(p.second)),
            Some(p) => (Some(p.second), Some(p.first)),
            None => (None, None),
        };
        let mut record = TrialRecord {
            trial: index,
            bit: u8::from(b),
            guess: u8::from(guess_bit),
            win: guess_bit == b,
            abstained,
            scores,
            score_unlearned,
            score_control,
            utilities: Utilities {
                original: utility(&original, &self.test)?,
                control: utility(&control, &self.test)?,
                unlearned: utility(&unlearned, &self.test)?,
            },
            costs: Costs {
                learn: learn_cost.work_units,
                unlearn: unlearn_cost.work_units,
                retrain: retrain_cost.work_units,
            },
            flags: ConstraintFlags {
                utility_gap_ok: true,
                cost_ok: true,
            },
            forget_size: forget_ids.len(),
        };
        record.flags = check_constraints(&record, self.cfg.utility_gap);
        Ok(TrialOutcome::Completed(record))
    }

    /// Shadow attack and per-game rule, as needed by the configured distinguisher.
    pub fn prepare_adversary(&self) -> Result<AdversaryPrep> {
        let attack = match self.cfg.distinguisher.kind {
            DistinguisherKind::Mia => Some(self.train_attack()?),
            _ => None,
        };
        let rule = match (
            self.cfg.distinguisher.kind,
            self.cfg.distinguisher.calibration,
        ) {
            (DistinguisherKind::ExactMatch, _) | (_, CalibrationScope::PerTrial) => None,
            _ => Some(self.calibrate_per_game(attack.as_ref())?),
        };
        Ok(AdversaryPrep { attack, rule })
    }
}

/// Adversary state fixed before the first trial.
#[derive(Clone, Debug, Default)]
pub struct AdversaryPrep {
    pub attack: Option<AttackModel>,
    pub rule: Option<DecisionRule>,
}

pub fn run_game(cfg: &GameConfig) -> Result<GameReport> {
    run_game_with(cfg, Execution::Parallel)
}

pub fn run_game_with(cfg: &GameConfig, execution: Execution) -> Result<GameReport> {
    let arena = Arena::new(cfg)?;
    let prep = arena.prepare_adversary()?;
    let outcomes: Vec<Result<TrialOutcome>> = match execution {
        Execution::Serial => (0..cfg.trials).map(|t| arena.run_trial(t, &prep)).collect(),
        Execution::Parallel => (0..cfg.trials)
            .into_par_iter()
            .map(|t| arena.run_trial(t, &prep))
            .collect(),
    };
    let mut records = Vec::with_capacity(cfg.trials);
    let mut aborted = Vec::new();
    for outcome in outcomes {
        match outcome? {
            TrialOutcome::Completed(r) => records.push(r),
            TrialOutcome::Aborted(a) => aborted.push(a),
        }
    }
    if records.is_empty() {
        let reason = aborted
            .first()
            .map(|a| a.reason.clone())
            .unwrap_or_default();
        return Err(Error::AllTrialsAborted(reason));
    }
    summarize(cfg.clone(), records, aborted, prep)
}

fn summarize(
    config: GameConfig,
    records: Vec<TrialRecord>,
    aborted: Vec<AbortedTrial>,
    prep: AdversaryPrep,
) -> Result<GameReport> {
    let trials = records.len() as u64;
    let wins = records.iter().filter(|r| r.win).count() as u64;
    let interval = jeffreys_interval(wins, trials, CREDIBLE_LEVEL)?;
    let utility_gap_failures = records.iter().filter(|r| !r.flags.utility_gap_ok).count();
    let cost_failures = records.iter().filter(|r| !r.flags.cost_ok).count();
    let failing_trials = records.iter().filter(|r| !r.flags.ok()).count();
    let summary = GameSummary {
        wins,
        trials,
        success_rate: wins as f64 / trials as f64,
        interval,
        significant: !interval.contains(0.5),
        abstentions: records.iter().filter(|r| r.abstained).count() as u64,
        constraints: ConstraintSummary {
            utility_gap_failures,
            cost_failures,
            failing_trials,
            invalid_game: failing_trials as f64 > MAX_CONSTRAINT_FAILURE_RATE * trials as f64,
        },
        rule: prep.rule,
        attack_accuracy: prep.attack.map(|a| a.held_out_accuracy),
        aborted,
    };
    Ok(GameReport {
        config,
        summary,
        records,
    })
}
