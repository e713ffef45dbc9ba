//! Adversaries: score functions, shadow-model membership inference, exact-match
//! replay, and the self-simulated decision rule.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::numerics::prob::{argmax, kl_divergence};
use crate::numerics::{gaussian_vector, median, RngStream};
use crate::schemes::{
    infer, init, learn_with, predict_all, Architecture, ModelState, SchemeConfig, SchemeId,
    Tracking,
};
use crate::unlearners::{unlearn, InferenceOracle, UnlearnRequest, UnlearnerConfig};

/// Input noise variance of the KL score.
pub const KLD_NOISE_VARIANCE: f64 = 0.1;
/// Fewest self-simulated games a decision rule may be calibrated from.
pub const MIN_CALIBRATION_TRIALS: usize = 8;
/// Medians closer than this make a calibration degenerate.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Anything that answers classification queries.
pub trait Predictor {
    fn predict(&mut self, x: &[f64]) -> Result<Vec<f64>>;
    fn input_dim(&self) -> usize;
}

impl Predictor for ModelState {
    fn predict(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        infer(self, x)?
            .into_distribution()
            .ok_or_else(|| Error::Unsupported {
                method: "classification score".into(),
                reason: format!("{} is a regression scheme", self.scheme),
            })
    }

    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }
}

impl Predictor for InferenceOracle {
    fn predict(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.query(x)
    }

    fn input_dim(&self) -> usize {
        InferenceOracle::input_dim(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistinguisherKind {
    Kld,
    Mia,
    ExactMatch,
}

impl DistinguisherKind {
    pub fn name(self) -> &'static str {
        match self {
            DistinguisherKind::Kld => "kld",
            DistinguisherKind::Mia => "mia",
            DistinguisherKind::ExactMatch => "exact-match",
        }
    }
}

impl std::fmt::Display for DistinguisherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scores of the two presented models, in presentation order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub first: f64,
    pub second: f64,
    pub kind: DistinguisherKind,
}

/// `Σᵢ KL(M(x̃ᵢ) ‖ M_orig(x̃ᵢ))` over the forget set, `x̃ᵢ = xᵢ + N(0, variance·I)`.
///
/// The noise for example `i` comes from `noise.derive(idᵢ)`, so both models see
/// the same `x̃ᵢ` whatever order they are scored in.
pub fn kld_score(
    original: &mut dyn Predictor,
    model: &mut dyn Predictor,
    forget: &Dataset,
    variance: f64,
    noise: &RngStream,
) -> Result<f64> {
    let dim = forget.dim();
    for d in [original.input_dim(), model.input_dim()] {
        if d != dim {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: dim,
            });
        }
    }
    let mut total = 0.0;
    for i in 0..forget.len() {
        let shift = gaussian_vector(&mut noise.derive(forget.id(i)), dim, 0.0, variance);
        let x: Vec<f64> = forget
            .row(i)
            .iter()
            .zip(&shift)
            .map(|(a, b)| a + b)
            .collect();
        let p = model.predict(&x)?;
        let q = original.predict(&x)?;
        total += kl_divergence(&p, &q)?;
    }
    Ok(total)
}

/// Attack features: confidences sorted high to low, cross-entropy loss, correctness.
pub fn attack_features(probs: &[f64], label: usize) -> Vec<f64> {
    let mut f = probs.to_vec();
    f.sort_by(|a, b| b.total_cmp(a));
    f.push(-probs[label].max(1e-12).ln());
    f.push(if argmax(probs) == label { 1.0 } else { 0.0 });
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSample {
    pub features: Vec<f64>,
    pub member: bool,
}

/// Logistic membership classifier over standardized attack features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub shadow_count: usize,
    /// Accuracy on shadow models held out from fitting.
    pub held_out_accuracy: f64,
}

const ATTACK_ITERATIONS: usize = 500;
const ATTACK_LR: f64 = 0.5;
const ATTACK_L2: f64 = 1e-4;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl AttackModel {
    /// Full-batch gradient descent on the logistic loss.
    pub fn fit(samples: &[AttackSample]) -> Result<AttackModel> {
        let first = samples.first().ok_or(Error::EmptyData)?;
        let d = first.features.len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, f) in mean.iter_mut().zip(&s.features) {
                *m += f / n;
            }
        }
        let mut scale = vec![0.0; d];
        for s in samples {
            for ((v, f), m) in scale.iter_mut().zip(&s.features).zip(&mean) {
                *v += (f - m) * (f - m) / n;
            }
        }
        for v in &mut scale {
            *v = if *v > 1e-24 { v.sqrt() } else { 1.0 };
        }
        let mut model = AttackModel {
            weights: vec![0.0; d],
            bias: 0.0,
            mean,
            scale,
            shadow_count: 0,
            held_out_accuracy: f64::NAN,
        };
        let xs: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| model.standardize(&s.features))
            .collect();
        let mut gw = vec![0.0; d];
        for _ in 0..ATTACK_ITERATIONS {
            gw.fill(0.0);
            let mut gb = 0.0;
            for (x, s) in xs.iter().zip(samples) {
                let y = if s.member { 1.0 } else { 0.0 };
                let r = sigmoid(model.logit(x)) - y;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += r * xi / n;
                }
                gb += r / n;
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= ATTACK_LR * (g + ATTACK_L2 * *w);
            }
            model.bias -= ATTACK_LR * gb;
        }
        Ok(model)
    }

    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Membership probability for a feature vector.
    pub fn membership(&self, features: &[f64]) -> f64 {
        sigmoid(self.logit(&self.standardize(features)))
    }

    pub fn accuracy(&self, samples: &[AttackSample]) -> f64 {
        if samples.is_empty() {
            return f64::NAN;
        }
        let right = samples
            .iter()
            .filter(|s| (self.membership(&s.features) >= 0.5) == s.member)
            .count();
        right as f64 / samples.len() as f64
    }
}

/// Member and non-member samples from one shadow model.
fn shadow_samples(
    scheme: SchemeId,
    arch: &Architecture,
    cfg: &SchemeConfig,
    population: &Dataset,
    security_param: u32,
    rng: &RngStream,
) -> Result<Vec<AttackSample>> {
    let mut ids = population.ids().to_vec();
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng.derive_named("split"));
    let half = ids.len() / 2;
    let (inside, outside) = ids.split_at(half);
    let members = population.subset(inside)?;
    let others = population.subset(outside)?;
    let fresh = init(scheme, arch, security_param, &mut rng.derive_named("init"))?;
    let (model, _, _) = learn_with(
        &fresh,
        &members,
        cfg,
        &mut rng.derive_named("learn"),
        Tracking::Skip,
    )?;
    let mut out = Vec::with_capacity(ids.len());
    for (data, member) in [(&members, true), (&others, false)] {
        for (i, p) in predict_all(&model, data)?.iter().enumerate() {
            out.push(AttackSample {
                features: attack_features(p, data.class(i)),
                member,
            });
        }
    }
    Ok(out)
}

/// Shadow-model attack: `shadow_count` models on random halves of `population`.
///
/// A quarter of the shadows (at least one) is held out to measure attack accuracy.
pub fn train_attack_model(
    scheme: SchemeId,
    arch: &Architecture,
    cfg: &SchemeConfig,
    population: &Dataset,
    shadow_count: usize,
    security_param: u32,
    rng: &RngStream,
) -> Result<AttackModel> {
    if !scheme.is_classifier() {
        return Err(Error::Unsupported {
            method: "membership inference".into(),
            reason: format!("{scheme} is a regression scheme"),
        });
    }
    if shadow_count < 2 || population.len() < 4 {
        return Err(Error::InsufficientPopulation {
            available: population.len(),
            needed: 4,
        });
    }
    let held = (shadow_count / 4).max(1);
    let mut fit = Vec::new();
    let mut test = Vec::new();
    for s in 0..shadow_count {
        let samples = shadow_samples(
            scheme,
            arch,
            cfg,
            population,
            security_param,
            &rng.derive(s as u64),
        )?;
        if s < shadow_count - held {
            fit.extend(samples);
        } else {
            test.extend(samples);
        }
    }
    let mut attack = AttackModel::fit(&fit)?;
    attack.shadow_count = shadow_count;
    attack.held_out_accuracy = attack.accuracy(&test);
    Ok(attack)
}

/// Mean membership probability the attack assigns to the forget examples under `model`.
pub fn mia_score(model: &mut dyn Predictor, forget: &Dataset, attack: &AttackModel) -> Result<f64> {
    if forget.is_empty() {
        return Err(Error::EmptyForget);
    }
    if model.input_dim() != forget.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: forget.dim(),
        });
    }
    let mut total = 0.0;
    for i in 0..forget.len() {
        let p = model.predict(forget.row(i))?;
        total += attack.membership(&attack_features(&p, forget.class(i)));
    }
    Ok(total / forget.len() as f64)
}

/// Which presented position the adversary believes holds the unlearned model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guess {
    First,
    Second,
    Abstain,
}

/// Replays a deterministic unlearner on the original model and looks for a literal match.
pub fn exact_match_guess(
    method: &UnlearnerConfig,
    req: &UnlearnRequest<'_>,
    candidates: [&ModelState; 2],
) -> Result<Guess> {
    if method.randomized() {
        return Ok(Guess::Abstain);
    }
    // A deterministic unlearner ignores its stream; any fixed stream will do.
    let (replay, _) = unlearn(method, req, &mut RngStream::new(0, 0))?;
    Ok(
        match (
            replay.bitwise_eq(candidates[0]),
            replay.bitwise_eq(candidates[1]),
        ) {
            (true, false) => Guess::First,
            (false, true) => Guess::Second,
            _ => Guess::Abstain,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerIsUnlearned,
    HigherIsUnlearned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub direction: Direction,
    /// Midpoint of the two calibration medians.
    pub threshold: f64,
    pub median_unlearned: f64,
    pub median_control: f64,
    pub samples: usize,
    /// Medians coincided; the direction is the fallback, not an observation.
    pub degenerate: bool,
}

impl DecisionRule {
    /// Uncalibrated default: unlearned models score lower.
    pub fn fallback() -> Self {
        Self {
            direction: Direction::LowerIsUnlearned,
            threshold: 0.0,
            median_unlearned: 0.0,
            median_control: 0.0,
            samples: 0,
            degenerate: true,
        }
    }
}

/// Rule from self-simulated scores of unlearned and retrained models.
pub fn calibrate_rule(unlearned: &[f64], control: &[f64]) -> Result<DecisionRule> {
    let samples = unlearned.len().min(control.len());
    if samples < MIN_CALIBRATION_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "calibration needs at least {MIN_CALIBRATION_TRIALS} simulated games, got {samples}"
        )));
    }
    if unlearned.iter().chain(control).any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite calibration score".into(),
        ));
    }
    let mu = median(unlearned);
    let mc = median(control);
    let degenerate = (mc - mu).abs() <= DEGENERATE_GAP;
    let direction = if !degenerate && mu > mc {
        Direction::HigherIsUnlearned
    } else {
        Direction::LowerIsUnlearned
    };
    Ok(DecisionRule {
        direction,
        threshold: 0.5 * (mu + mc),
        median_unlearned: mu,
        median_control: mc,
        samples,
        degenerate,
    })
}

/// Picks the position the rule says is unlearned; equal scores go to the first position.
pub fn decide(rule: &DecisionRule, scores: &ScorePair) -> Guess {
    let (a, b) = (scores.first, scores.second);
    let second = match rule.direction {
        Direction::LowerIsUnlearned => b < a,
        Direction::HigherIsUnlearned => b > a,
    };
    if second {
        Guess::Second
    } else {
        Guess::First
    }
}
