//! Learning schemes: `init`, `learn`, `infer`, plus utility and cost accounting.
//!
//! Four schemes are provided. k-nearest neighbours and ridge least squares are
//! deterministic; multinomial logistic regression and the ReLU MLP are trained
//! by seeded mini-batch SGD and are entropic (different init streams give
//! different models).

pub mod network;

use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::linalg::{invert_spd, solve_spd, work_units, Matrix};
use crate::numerics::prob::{argmax, softmax};
use crate::numerics::{gaussian_vector, RngStream};
use network::{cross_entropy_grad, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    Knn,
    LinearRegression,
    Logistic,
    Mlp,
}

impl SchemeId {
    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Knn => "knn",
            SchemeId::LinearRegression => "linear-regression",
            SchemeId::Logistic => "logistic",
            SchemeId::Mlp => "mlp",
        }
    }

    /// Trained by gradient descent over a flat parameter vector.
    pub fn is_parametric_classifier(self) -> bool {
        matches!(self, SchemeId::Logistic | SchemeId::Mlp)
    }

    pub fn is_classifier(self) -> bool {
        !matches!(self, SchemeId::LinearRegression)
    }

    /// Whether `learn(init(λ), D)` carries entropy from the random streams.
    pub fn is_entropic(self) -> bool {
        self.is_parametric_classifier()
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of a model: feature dimension, class count and hidden widths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Zero for regression.
    pub num_classes: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn classifier(input_dim: usize, num_classes: usize, hidden: Vec<usize>) -> Self {
        Self {
            input_dim,
            num_classes,
            hidden,
        }
    }

    pub fn regression(input_dim: usize) -> Self {
        Self {
            input_dim,
            num_classes: 0,
            hidden: Vec::new(),
        }
    }

    /// Layer widths `[input, hidden…, classes]`.
    pub fn layers(&self) -> Vec<usize> {
        let mut l = Vec::with_capacity(self.hidden.len() + 2);
        l.push(self.input_dim);
        l.extend(&self.hidden);
        l.push(self.num_classes);
        l
    }

    pub fn param_count(&self, scheme: SchemeId) -> usize {
        match scheme {
            SchemeId::Knn => 0,
            SchemeId::LinearRegression => self.input_dim,
            SchemeId::Logistic => Network::param_count(&[self.input_dim, self.num_classes]),
            SchemeId::Mlp => Network::param_count(&self.layers()),
        }
    }

    pub fn network(&self, scheme: SchemeId) -> Network {
        match scheme {
            SchemeId::Logistic => Network::new(&[self.input_dim, self.num_classes]),
            _ => Network::new(&self.layers()),
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Neighbours consulted by k-NN.
    pub k: usize,
    /// Ridge added to the least-squares Gram matrix.
    pub ridge: f64,
    /// Standard deviation of the objective perturbation `bᵀθ/m` (0 disables it).
    pub sigma_objective: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            k: 1,
            ridge: 0.0,
            sigma_objective: 0.0,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("scheme config: {what}")));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad("ridge must be non-negative");
        }
        if !(self.sigma_objective >= 0.0 && self.sigma_objective.is_finite()) {
            return bad("sigma_objective must be non-negative");
        }
        Ok(())
    }
}

/// Work performed by a learning or unlearning step.
///
/// One unit is one example-gradient evaluation; dense linear algebra is billed
/// at one unit per `P` multiply-adds for a `P`-parameter model, the work of one
/// gradient of a linear model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CostMeter {
    pub work_units: u64,
}

impl CostMeter {
    pub fn new(work_units: u64) -> Self {
        Self { work_units }
    }

    pub fn add(&mut self, units: u64) {
        self.work_units += units;
    }
}

impl std::ops::Add for CostMeter {
    type Output = CostMeter;
    fn add(self, rhs: CostMeter) -> CostMeter {
        CostMeter::new(self.work_units + rhs.work_units)
    }
}

/// Training rows memorized by k-NN, kept sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceStore {
    pub k: usize,
    pub ids: Vec<u64>,
    pub rows: Vec<f64>,
    pub labels: Vec<f64>,
}

impl InstanceStore {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Cached `(XᵀX + ridge·I)⁻¹` and `Xᵀy` for least squares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramCache {
    pub inverse: Matrix<f64>,
    pub moment: Vec<f64>,
    pub ridge: f64,
}

/// A point of the hypothesis space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub scheme: SchemeId,
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub store: Option<InstanceStore>,
    pub gram: Option<GramCache>,
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl ModelState {
    /// Literal equality of every stored float, bit for bit.
    pub fn bitwise_eq(&self, other: &ModelState) -> bool {
        let store_eq = match (&self.store, &other.store) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.k == b.k
                    && a.ids == b.ids
                    && bits_eq(&a.rows, &b.rows)
                    && bits_eq(&a.labels, &b.labels)
            }
            _ => false,
        };
        let gram_eq = match (&self.gram, &other.gram) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                bits_eq(a.inverse.as_slice(), b.inverse.as_slice())
                    && bits_eq(&a.moment, &b.moment)
                    && a.ridge.to_bits() == b.ridge.to_bits()
            }
            _ => false,
        };
        self.scheme == other.scheme
            && self.arch == other.arch
            && bits_eq(&self.params, &other.params)
            && store_eq
            && gram_eq
    }

    /// Tagged text blob; floats keep their exact 64-bit value.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model state is always serializable")
    }

    pub fn from_json(text: &str) -> Result<ModelState> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    /// Raw logits of a parametric classifier.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.scheme.is_parametric_classifier() {
            return Err(Error::NotParametric(self.scheme.to_string()));
        }
        self.check_dim(x)?;
        let mut net = self.arch.network(self.scheme);
        Ok(net.forward(&self.params, x).to_vec())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// One recorded optimizer step: the batch it used and the exact addend applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub batch: Vec<u64>,
    pub delta: Vec<f64>,
}

/// Per-batch history of an SGD run.
///
/// Folding the deltas onto `initial` left to right reproduces the trained
/// parameters bit for bit, because that fold is exactly how training applied them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTranscript {
    pub initial: Vec<f64>,
    pub steps: Vec<TranscriptStep>,
}

impl TrainingTranscript {
    /// `initial + Σ deltas` over the steps accepted by `keep`, in training order.
    pub fn replay(&self, mut keep: impl FnMut(&TranscriptStep) -> bool) -> Vec<f64> {
        let mut params = self.initial.clone();
        for step in &self.steps {
            if keep(step) {
                for (p, d) in params.iter_mut().zip(&step.delta) {
                    *p += d;
                }
            }
        }
        params
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Output of `infer`.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Distribution(Vec<f64>),
    Value(f64),
}

impl Prediction {
    pub fn into_distribution(self) -> Option<Vec<f64>> {
        match self {
            Prediction::Distribution(p) => Some(p),
            Prediction::Value(_) => None,
        }
    }
}

/// Samples an initial model. `security_param` only tags the run.
pub fn init(
    scheme: SchemeId,
    arch: &Architecture,
    _security_param: u32,
    rng: &mut RngStream,
) -> Result<ModelState> {
    if arch.input_dim == 0 || (scheme.is_classifier() && arch.num_classes < 2) {
        return Err(Error::InvalidArgument(format!(
            "architecture {arch:?} is not valid for {scheme}"
        )));
    }
    let arch = if scheme == SchemeId::Logistic {
        Architecture::classifier(arch.input_dim, arch.num_classes, Vec::new())
    } else {
        arch.clone()
    };
    let (params, store) = match scheme {
        SchemeId::Knn => (
            Vec::new(),
            Some(InstanceStore {
                k: 1,
                ids: Vec::new(),
                rows: Vec::new(),
                labels: Vec::new(),
            }),
        ),
        SchemeId::LinearRegression => (vec![0.0; arch.input_dim], None),
        SchemeId::Logistic | SchemeId::Mlp => {
            let net = arch.network(scheme);
            let mut params = vec![0.0; net.params()];
            for (fan_in, range) in net.weight_blocks() {
                let sd = (1.0 / fan_in as f64).sqrt();
                for w in &mut params[range] {
                    *w = sd * rng.standard_normal();
                }
            }
            (params, None)
        }
    };
    Ok(ModelState {
        scheme,
        arch,
        params,
        store,
        gram: None,
    })
}

/// Whether `learn` records per-batch deltas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tracking {
    Record,
    Skip,
}

/// Trains `state` on `data`, recording a transcript for SGD schemes.
pub fn learn(
    state: &ModelState,
    data: &Dataset,
    cfg: &SchemeConfig,
    rng: &mut RngStream,
) -> Result<(ModelState, TrainingTranscript, CostMeter)> {
    learn_with(state, data, cfg, rng, Tracking::Record)
}

pub fn learn_with(
    state: &ModelState,
    data: &Dataset,
    cfg: &SchemeConfig,
    rng: &mut RngStream,
    tracking: Tracking,
) -> Result<(ModelState, TrainingTranscript, CostMeter)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.dim() != state.arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: state.arch.input_dim,
            actual: data.dim(),
        });
    }
    match (state.scheme, data.task()) {
        (SchemeId::LinearRegression, TaskKind::Regression) => {}
        (SchemeId::LinearRegression, _) | (_, TaskKind::Regression) => {
            return Err(Error::InvalidArgument(format!(
                "{} cannot learn a {:?} task",
                state.scheme,
                data.task()
            )))
        }
        (_, TaskKind::Classification { num_classes }) if num_classes != state.arch.num_classes => {
            return Err(Error::DimensionMismatch {
                expected: state.arch.num_classes,
                actual: num_classes,
            })
        }
        _ => {}
    }
    match state.scheme {
        SchemeId::Knn => {
            let store = build_store(data, cfg.k);
            let mut out = state.clone();
            out.store = Some(store);
            Ok((
                out,
                TrainingTranscript::default(),
                CostMeter::new(data.len() as u64),
            ))
        }
        SchemeId::LinearRegression => {
            let (out, cost) = fit_least_squares(state, data, cfg.ridge)?;
            Ok((out, TrainingTranscript::default(), cost))
        }
        SchemeId::Logistic | SchemeId::Mlp => sgd(state, data, cfg, rng, tracking),
    }
}

pub(crate) fn build_store(data: &Dataset, k: usize) -> InstanceStore {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by_key(|&i| data.id(i));
    let mut rows = Vec::with_capacity(data.len() * data.dim());
    for &i in &order {
        rows.extend_from_slice(data.row(i));
    }
    InstanceStore {
        k,
        ids: order.iter().map(|&i| data.id(i)).collect(),
        rows,
        labels: order.iter().map(|&i| data.label(i)).collect(),
    }
}

fn fit_least_squares(
    state: &ModelState,
    data: &Dataset,
    ridge: f64,
) -> Result<(ModelState, CostMeter)> {
    let (m, n) = (data.len(), data.dim());
    if m <= n && ridge == 0.0 {
        return Err(Error::DegenerateGram { rows: m, cols: n });
    }
    let x = data.features();
    let mut gram = x.gram();
    gram.add_diagonal(ridge);
    let moment = x.transpose().mul_vec(data.labels())?;
    let params = solve_spd(&gram, &moment)?;
    let inverse = invert_spd(&gram)?;
    let (m64, n64) = (m as u64, n as u64);
    // Gram + moment, one factorization, n solves for the inverse and one for the coefficients.
    let madds = m64 * n64 * n64 + m64 * n64 + n64 * n64 * n64 + (n64 + 1) * n64 * n64;
    let mut out = state.clone();
    out.params = params;
    out.gram = Some(GramCache {
        inverse,
        moment,
        ridge,
    });
    Ok((out, CostMeter::new(work_units(madds, n))))
}

fn sgd(
    state: &ModelState,
    data: &Dataset,
    cfg: &SchemeConfig,
    rng: &mut RngStream,
    tracking: Tracking,
) -> Result<(ModelState, TrainingTranscript, CostMeter)> {
    let mut net = state.arch.network(state.scheme);
    let p = net.params();
    if state.params.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            actual: state.params.len(),
        });
    }
    let m = data.len();
    let classes = state.arch.num_classes;
    let perturbation = (cfg.sigma_objective > 0.0).then(|| {
        let mut r = rng.derive_named("objective-perturbation");
        let b = gaussian_vector(&mut r, p, 0.0, cfg.sigma_objective * cfg.sigma_objective);
        b.into_iter().map(|v| v / m as f64).collect::<Vec<f64>>()
    });
    let mut shuffle_rng = rng.derive_named("batch-order");

    let mut params = state.params.clone();
    let mut transcript = TrainingTranscript {
        initial: params.clone(),
        steps: Vec::new(),
    };
    let mut velocity = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut dlogits = vec![0.0; classes];
    let mut order: Vec<usize> = (0..m).collect();
    for _ in 0..cfg.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let probs = softmax(net.forward(&params, data.row(i)));
                cross_entropy_grad(&probs, data.class(i), &mut dlogits);
                net.backward(&params, &dlogits, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            let mut delta = Vec::with_capacity(if tracking == Tracking::Record { p } else { 0 });
            for j in 0..p {
                let mut g = grad[j] * scale + cfg.weight_decay * params[j];
                if let Some(b) = &perturbation {
                    g += b[j];
                }
                velocity[j] = cfg.momentum * velocity[j] + g;
                let step = -cfg.learning_rate * velocity[j];
                params[j] += step;
                if tracking == Tracking::Record {
                    delta.push(step);
                }
            }
            if tracking == Tracking::Record {
                transcript.steps.push(TranscriptStep {
                    batch: batch.iter().map(|&i| data.id(i)).collect(),
                    delta,
                });
            }
        }
    }
    let mut out = state.clone();
    out.params = params;
    let cost = CostMeter::new((cfg.epochs * m) as u64);
    Ok((out, transcript, cost))
}

fn knn_vote(store: &InstanceStore, classes: usize, x: &[f64]) -> Vec<f64> {
    if store.is_empty() {
        return vec![1.0 / classes as f64; classes];
    }
    let dim = x.len();
    let mut dist: Vec<(f64, u64, usize)> = store
        .ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let row = &store.rows[i * dim..(i + 1) * dim];
            let d: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, id, i)
        })
        .collect();
    let k = store.k.min(dist.len());
    let by_distance_then_id =
        |a: &(f64, u64, usize), b: &(f64, u64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_distance_then_id);
    }
    let mut votes = vec![0.0; classes];
    for &(_, _, i) in &dist[..k] {
        votes[store.labels[i] as usize] += 1.0;
    }
    votes.iter_mut().for_each(|v| *v /= k as f64);
    votes
}

/// Class probabilities (classifiers) or a predicted value (regression).
pub fn infer(state: &ModelState, x: &[f64]) -> Result<Prediction> {
    state.check_dim(x)?;
    match state.scheme {
        SchemeId::Knn => {
            let store = state.store.as_ref().ok_or(Error::EmptyData)?;
            Ok(Prediction::Distribution(knn_vote(
                store,
                state.arch.num_classes,
                x,
            )))
        }
        SchemeId::LinearRegression => Ok(Prediction::Value(
            state.params.iter().zip(x).map(|(a, b)| a * b).sum(),
        )),
        SchemeId::Logistic | SchemeId::Mlp => {
            Ok(Prediction::Distribution(softmax(&state.logits(x)?)))
        }
    }
}

/// Batched class probabilities for every row of `data`.
pub fn predict_all(state: &ModelState, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    if state.scheme.is_parametric_classifier() {
        let mut net = state.arch.network(state.scheme);
        if data.dim() != state.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: state.arch.input_dim,
                actual: data.dim(),
            });
        }
        return Ok((0..data.len())
            .map(|i| net.probabilities(&state.params, data.row(i)))
            .collect());
    }
    (0..data.len())
        .map(|i| {
            infer(state, data.row(i))?
                .into_distribution()
                .ok_or_else(|| {
                    Error::InvalidArgument("regression model has no distribution".into())
                })
        })
        .collect()
}

/// Accuracy for classifiers; `1 / (1 + MSE)` for regression.
pub fn utility(state: &ModelState, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    if state.scheme == SchemeId::LinearRegression {
        let mut se = 0.0;
        for i in 0..test.len() {
            if let Prediction::Value(v) = infer(state, test.row(i))? {
                se += (v - test.label(i)).powi(2);
            }
        }
        return Ok(1.0 / (1.0 + se / test.len() as f64));
    }
    let probs = predict_all(state, test)?;
    Ok(accuracy(&probs, test))
}

pub fn accuracy(probs: &[Vec<f64>], data: &Dataset) -> f64 {
    let correct = probs
        .iter()
        .enumerate()
        .filter(|(i, p)| argmax(p) == data.class(*i))
        .count();
    correct as f64 / data.len() as f64
}
