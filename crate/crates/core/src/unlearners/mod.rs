//! Unlearning algorithms: exact deletion for k-NN and least squares, four
//! approximate methods for SGD-trained classifiers, a DP oracle and the retrain control.

pub mod oracle;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::numerics::linalg::{sherman_morrison_downdate, solve_spd, work_units, Matrix};
use crate::numerics::prob::softmax;
use crate::numerics::{gaussian_vector, RngStream};
use crate::schemes::network::{cross_entropy_grad, kl_student_grad};
use crate::schemes::{
    init, learn_with, CostMeter, ModelState, SchemeConfig, SchemeId, Tracking, TrainingTranscript,
};
pub use oracle::{wrap_dp_oracle, DpNoise, InferenceOracle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KnnDelete,
    LinregDowndate,
    Amnesiac,
    BadTeacher,
    Ssd,
    NewtonRemoval,
    Retrain,
    DpOracle,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::KnnDelete,
        Method::LinregDowndate,
        Method::Amnesiac,
        Method::BadTeacher,
        Method::Ssd,
        Method::NewtonRemoval,
        Method::Retrain,
        Method::DpOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::KnnDelete => "knn-delete",
            Method::LinregDowndate => "linreg-downdate",
            Method::Amnesiac => "amnesiac",
            Method::BadTeacher => "bad-teacher",
            Method::Ssd => "ssd",
            Method::NewtonRemoval => "newton-removal",
            Method::Retrain => "retrain",
            Method::DpOracle => "dp-oracle",
        }
    }

    /// Whether `Unlearn` itself consumes randomness.
    pub fn is_randomized(self) -> bool {
        matches!(
            self,
            Method::BadTeacher | Method::Retrain | Method::DpOracle
        )
    }

    /// Whether the output equals retraining on the retain set.
    pub fn is_perfect(self) -> bool {
        matches!(self, Method::KnnDelete | Method::LinregDowndate)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown unlearning method `{s}`")))
    }
}

/// Seed of the public stream behind the Newton-removal perturbation.
pub const NEWTON_NOISE_SEED: u64 = 0x6e65_7774_6f6e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnerConfig {
    pub method: Method,
    /// SSD selection weighting α.
    pub ssd_alpha: f64,
    /// SSD dampening λ_d.
    pub ssd_lambda: f64,
    pub bad_teacher_steps: usize,
    pub bad_teacher_lr: f64,
    pub newton_ridge: f64,
    /// Magnitude σ of the Newton-removal parameter perturbation.
    pub newton_sigma: f64,
    pub newton_noise_seed: u64,
    pub dp_epsilon: f64,
    pub dp_delta: f64,
}

impl Default for UnlearnerConfig {
    fn default() -> Self {
        Self {
            method: Method::Amnesiac,
            ssd_alpha: 100.0,
            ssd_lambda: 1.0,
            bad_teacher_steps: 50,
            bad_teacher_lr: 0.5,
            newton_ridge: 0.0,
            newton_sigma: 0.0,
            newton_noise_seed: NEWTON_NOISE_SEED,
            dp_epsilon: 1.0,
            dp_delta: 0.0,
        }
    }
}

impl UnlearnerConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn randomized(&self) -> bool {
        self.method.is_randomized()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("unlearner config: {what}")));
        if !(self.ssd_alpha > 0.0 && self.ssd_alpha.is_finite()) {
            return bad("ssd_alpha must be positive");
        }
        if !(self.ssd_lambda > 0.0 && self.ssd_lambda.is_finite()) {
            return bad("ssd_lambda must be positive");
        }
        if !(self.bad_teacher_lr > 0.0 && self.bad_teacher_lr.is_finite()) {
            return bad("bad_teacher_lr must be positive");
        }
        if !(self.newton_ridge >= 0.0 && self.newton_ridge.is_finite()) {
            return bad("newton_ridge must be non-negative");
        }
        if !(self.newton_sigma >= 0.0 && self.newton_sigma.is_finite()) {
            return bad("newton_sigma must be non-negative");
        }
        if !(self.dp_epsilon > 0.0) {
            return bad("dp_epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.dp_delta) {
            return bad("dp_delta must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Everything an unlearner may look at.
#[derive(Clone, Copy, Debug)]
pub struct UnlearnRequest<'a> {
    pub original: &'a ModelState,
    pub transcript: &'a TrainingTranscript,
    /// The training set the original model was learned on.
    pub train: &'a Dataset,
    pub forget: &'a [u64],
    pub scheme_cfg: &'a SchemeConfig,
    pub security_param: u32,
}

impl UnlearnRequest<'_> {
    pub fn retain_ids(&self) -> Vec<u64> {
        let drop: HashSet<u64> = self.forget.iter().copied().collect();
        self.train
            .ids()
            .iter()
            .copied()
            .filter(|id| !drop.contains(id))
            .collect()
    }
}

/// Dispatches on `cfg.method`.
pub fn unlearn(
    cfg: &UnlearnerConfig,
    req: &UnlearnRequest<'_>,
    rng: &mut RngStream,
) -> Result<(ModelState, CostMeter)> {
    cfg.validate()?;
    match cfg.method {
        Method::KnnDelete => unlearn_knn_delete(req.original, req.forget),
        Method::LinregDowndate => unlearn_linreg_downdate(req.original, req.train, req.forget),
        Method::Amnesiac => unlearn_amnesiac(req.original, req.transcript, req.forget),
        Method::BadTeacher => {
            unlearn_bad_teacher(req, cfg.bad_teacher_steps, cfg.bad_teacher_lr, rng)
        }
        Method::Ssd => unlearn_ssd(
            req.original,
            req.train,
            req.forget,
            cfg.ssd_alpha,
            cfg.ssd_lambda,
        )
        .map(|(s, _, c)| (s, c)),
        Method::NewtonRemoval => unlearn_newton_removal(
            req,
            cfg.newton_ridge,
            cfg.newton_sigma,
            cfg.newton_noise_seed,
        ),
        Method::Retrain => {
            let retain = req.train.subset(&req.retain_ids())?;
            unlearn_retrain(
                req.original,
                &retain,
                req.scheme_cfg,
                req.security_param,
                rng,
            )
        }
        // Privacy comes from the randomized inference oracle; the model itself is kept.
        Method::DpOracle => {
            if !req.original.scheme.is_parametric_classifier() {
                return Err(Error::NotParametric(req.original.scheme.to_string()));
            }
            Ok((req.original.clone(), CostMeter::default()))
        }
    }
}

/// Removes the forget rows from a k-NN instance store.
pub fn unlearn_knn_delete(state: &ModelState, forget: &[u64]) -> Result<(ModelState, CostMeter)> {
    let store = state
        .store
        .as_ref()
        .filter(|_| state.scheme == SchemeId::Knn)
        .ok_or_else(|| Error::Unsupported {
            method: Method::KnnDelete.to_string(),
            reason: format!("scheme {} has no instance store", state.scheme),
        })?;
    let present: HashSet<u64> = store.ids.iter().copied().collect();
    if let Some(&missing) = forget.iter().find(|id| !present.contains(id)) {
        return Err(Error::UnknownId(missing));
    }
    let drop: HashSet<u64> = forget.iter().copied().collect();
    let dim = state.arch.input_dim;
    let mut out = store.clone();
    out.ids.clear();
    out.rows.clear();
    out.labels.clear();
    for (i, &id) in store.ids.iter().enumerate() {
        if !drop.contains(&id) {
            out.ids.push(id);
            out.rows
                .extend_from_slice(&store.rows[i * dim..(i + 1) * dim]);
            out.labels.push(store.labels[i]);
        }
    }
    let mut state = state.clone();
    state.store = Some(out);
    Ok((state, CostMeter::new(forget.len() as u64)))
}

/// Sequential Sherman–Morrison downdates of the cached inverse, one per forgotten row.
pub fn unlearn_linreg_downdate(
    state: &ModelState,
    data: &Dataset,
    forget: &[u64],
) -> Result<(ModelState, CostMeter)> {
    downdate_impl(state, data, forget, true)
}

/// Downdate that forgets to subtract `yᵢxᵢ` from `Xᵀy`; a deliberate fault for mutation checks.
#[doc(hidden)]
pub fn unlearn_linreg_downdate_skipping_moment(
    state: &ModelState,
    data: &Dataset,
    forget: &[u64],
) -> Result<(ModelState, CostMeter)> {
    downdate_impl(state, data, forget, false)
}

fn downdate_impl(
    state: &ModelState,
    data: &Dataset,
    forget: &[u64],
    update_moment: bool,
) -> Result<(ModelState, CostMeter)> {
    let cache = state
        .gram
        .as_ref()
        .filter(|_| state.scheme == SchemeId::LinearRegression)
        .ok_or_else(|| Error::Unsupported {
            method: Method::LinregDowndate.to_string(),
            reason: "model carries no cached Gram inverse".into(),
        })?;
    if forget.is_empty() {
        return Ok((state.clone(), CostMeter::default()));
    }
    let pos = data.index();
    let mut inverse = cache.inverse.clone();
    let mut moment = cache.moment.clone();
    for &id in forget {
        let &i = pos.get(&id).ok_or(Error::UnknownId(id))?;
        let x = data.row(i);
        inverse = sherman_morrison_downdate(&inverse, x)?;
        if update_moment {
            let y = data.label(i);
            for (m, xi) in moment.iter_mut().zip(x) {
                *m -= y * xi;
            }
        }
    }
    let n = state.arch.input_dim;
    let params = inverse.mul_vec(&moment)?;
    let (k, n64) = (forget.len() as u64, n as u64);
    let madds = k * (2 * n64 * n64 + n64) + n64 * n64;
    let mut out = state.clone();
    out.params = params;
    out.gram = Some(crate::schemes::GramCache {
        inverse,
        moment,
        ridge: cache.ridge,
    });
    Ok((out, CostMeter::new(work_units(madds, n))))
}

/// Rebuilds the parameters from the transcript, leaving out every step whose
/// batch touched a forgotten example.
pub fn unlearn_amnesiac(
    state: &ModelState,
    transcript: &TrainingTranscript,
    forget: &[u64],
) -> Result<(ModelState, CostMeter)> {
    if !state.scheme.is_parametric_classifier() {
        return Err(Error::NotParametric(state.scheme.to_string()));
    }
    let full = transcript.replay(|_| true);
    let same = full.len() == state.params.len()
        && full
            .iter()
            .zip(&state.params)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same {
        return Err(Error::TranscriptMismatch);
    }
    let drop: HashSet<u64> = forget.iter().copied().collect();
    let params = transcript.replay(|step| !step.batch.iter().any(|id| drop.contains(id)));
    // Re-summing one step touches every parameter once, about the work of one
    // example gradient in the units `learn` bills.
    let mut out = state.clone();
    out.params = params;
    Ok((out, CostMeter::new(transcript.steps.len() as u64)))
}

/// Retain examples the bad-teacher student is anchored to.
pub const BAD_TEACHER_RETAIN_SAMPLE: usize = 256;
/// Forget and retain examples per bad-teacher step.
pub const BAD_TEACHER_BATCH: usize = 32;

/// Distils a randomly initialized teacher on the forget set and the original
/// model on a retain sample into a copy of the original model.
pub fn unlearn_bad_teacher(
    req: &UnlearnRequest<'_>,
    steps: usize,
    lr: f64,
    rng: &mut RngStream,
) -> Result<(ModelState, CostMeter)> {
    let good = req.original;
    if !good.scheme.is_parametric_classifier() {
        return Err(Error::NotParametric(good.scheme.to_string()));
    }
    if steps == 0 || req.forget.is_empty() {
        return Ok((good.clone(), CostMeter::default()));
    }
    let bad = init(
        good.scheme,
        &good.arch,
        req.security_param,
        &mut rng.derive_named("bad-teacher"),
    )?;
    let forget = req.train.subset(req.forget)?;
    let retain_ids = req.retain_ids();
    let mut sample_rng = rng.derive_named("retain-sample");
    let take = retain_ids.len().min(BAD_TEACHER_RETAIN_SAMPLE);
    let mut sampled: Vec<u64> = rand::seq::index::sample(&mut sample_rng, retain_ids.len(), take)
        .into_iter()
        .map(|i| retain_ids[i])
        .collect();
    sampled.sort_unstable();
    let retain = req.train.subset(&sampled)?;

    let mut net = good.arch.network(good.scheme);
    let forget_targets: Vec<Vec<f64>> = (0..forget.len())
        .map(|i| net.probabilities(&bad.params, forget.row(i)))
        .collect();
    let retain_targets: Vec<Vec<f64>> = (0..retain.len())
        .map(|i| net.probabilities(&good.params, retain.row(i)))
        .collect();

    let mut params = good.params.clone();
    let mut grad = vec![0.0; params.len()];
    let mut dlogits = vec![0.0; good.arch.num_classes];
    let mut batch_rng = rng.derive_named("batches");
    let mut units = (forget.len() + retain.len()) as u64;
    for _ in 0..steps {
        grad.fill(0.0);
        for (data, targets) in [(&forget, &forget_targets), (&retain, &retain_targets)] {
            let b = data.len().min(BAD_TEACHER_BATCH);
            if b == 0 {
                continue;
            }
            let idx = rand::seq::index::sample(&mut batch_rng, data.len(), b);
            let scale = 1.0 / b as f64;
            for i in idx {
                let s = net.probabilities(&params, data.row(i));
                kl_student_grad(&s, &targets[i], &mut dlogits);
                dlogits.iter_mut().for_each(|d| *d *= scale);
                net.backward(&params, &dlogits, &mut grad);
            }
            units += b as u64;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
    }
    let mut out = good.clone();
    out.params = params;
    Ok((out, CostMeter::new(units)))
}

/// Diagonal empirical Fisher: mean squared gradient of `ln p(y | x)`.
pub fn diagonal_fisher(state: &ModelState, data: &Dataset) -> Result<Vec<f64>> {
    if !state.scheme.is_parametric_classifier() {
        return Err(Error::NotParametric(state.scheme.to_string()));
    }
    let mut net = state.arch.network(state.scheme);
    let p = net.params();
    let mut fisher = vec![0.0; p];
    if data.is_empty() {
        return Ok(fisher);
    }
    let mut grad = vec![0.0; p];
    let mut dlogits = vec![0.0; state.arch.num_classes];
    for i in 0..data.len() {
        let probs = net.probabilities(&state.params, data.row(i));
        cross_entropy_grad(&probs, data.class(i), &mut dlogits);
        grad.fill(0.0);
        net.backward(&state.params, &dlogits, &mut grad);
        for (f, g) in fisher.iter_mut().zip(&grad) {
            *f += g * g;
        }
    }
    let inv = 1.0 / data.len() as f64;
    fisher.iter_mut().for_each(|f| *f *= inv);
    Ok(fisher)
}

/// How many parameters SSD dampened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsdCensus {
    pub selected: usize,
    pub total: usize,
}

impl SsdCensus {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.selected as f64 / self.total as f64
        }
    }
}

/// Selective synaptic dampening: shrinks parameters far more important to the
/// forget set than to the whole training set.
pub fn unlearn_ssd(
    state: &ModelState,
    train: &Dataset,
    forget: &[u64],
    alpha: f64,
    lambda: f64,
) -> Result<(ModelState, SsdCensus, CostMeter)> {
    if !state.scheme.is_parametric_classifier() {
        return Err(Error::NotParametric(state.scheme.to_string()));
    }
    let total = state.params.len();
    if forget.is_empty() {
        return Ok((
            state.clone(),
            SsdCensus { selected: 0, total },
            CostMeter::default(),
        ));
    }
    let f_full = diagonal_fisher(state, train)?;
    let f_forget = diagonal_fisher(state, &train.subset(forget)?)?;
    let mut params = state.params.clone();
    let mut selected = 0;
    for ((p, &ff), &fd) in params.iter_mut().zip(&f_forget).zip(&f_full) {
        if ff > alpha * fd {
            *p *= (lambda * fd / ff).min(1.0);
            selected += 1;
        }
    }
    let mut out = state.clone();
    out.params = params;
    let cost = CostMeter::new((train.len() + forget.len()) as u64);
    Ok((out, SsdCensus { selected, total }, cost))
}

/// One Newton step on the retain objective from the trained parameters,
/// followed by a public-seed perturbation of magnitude `sigma`.
///
/// Supported for the convex schemes: softmax regression (cross-entropy with
/// weight decay) and least squares (with its ridge).
pub fn unlearn_newton_removal(
    req: &UnlearnRequest<'_>,
    newton_ridge: f64,
    sigma: f64,
    noise_seed: u64,
) -> Result<(ModelState, CostMeter)> {
    let state = req.original;
    if !matches!(
        state.scheme,
        SchemeId::Logistic | SchemeId::LinearRegression
    ) {
        return Err(Error::NotConvexScheme(state.scheme.to_string()));
    }
    if req.forget.is_empty() {
        return Ok((state.clone(), CostMeter::default()));
    }
    let forget = req.train.subset(req.forget)?;
    let retain = req.train.subset(&req.retain_ids())?;
    let p = state.params.len();
    let (mut hessian, g) = match state.scheme {
        SchemeId::Logistic => {
            let lambda = req.scheme_cfg.weight_decay;
            let mut h = softmax_hessian(state, &retain);
            h.add_diagonal(lambda * retain.len() as f64);
            let mut g = softmax_gradient_sum(state, &forget);
            for (gi, t) in g.iter_mut().zip(&state.params) {
                *gi += lambda * forget.len() as f64 * t;
            }
            (h, g)
        }
        _ => {
            let mut h = retain.features().gram();
            h.add_diagonal(req.scheme_cfg.ridge);
            let mut g = vec![0.0; p];
            for i in 0..forget.len() {
                let x = forget.row(i);
                let r: f64 =
                    x.iter().zip(&state.params).map(|(a, b)| a * b).sum::<f64>() - forget.label(i);
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += r * xi;
                }
            }
            (h, g)
        }
    };
    hessian.add_diagonal(newton_ridge);
    let step = solve_spd(&hessian, &g)?;
    let mut params: Vec<f64> = state.params.iter().zip(&step).map(|(t, s)| t + s).collect();
    if sigma > 0.0 {
        let mut noise_rng = RngStream::new(noise_seed, 0).derive_named("newton-removal");
        let z = gaussian_vector(&mut noise_rng, p, 0.0, 1.0);
        for (t, zi) in params.iter_mut().zip(&z) {
            *t += sigma * zi;
        }
    }
    let mut out = state.clone();
    out.params = params;
    let p64 = p as u64;
    let units = retain.len() as u64 + forget.len() as u64 + work_units(p64 * p64 * p64, p);
    Ok((out, CostMeter::new(units)))
}

/// Map from (class, feature-or-bias) to the flat softmax-regression index.
fn softmax_index(classes: usize, dim: usize, c: usize, j: usize) -> usize {
    if j < dim {
        c * dim + j
    } else {
        classes * dim + c
    }
}

fn softmax_hessian(state: &ModelState, data: &Dataset) -> Matrix<f64> {
    let (d, k) = (state.arch.input_dim, state.arch.num_classes);
    let p = state.params.len();
    let mut h = vec![0.0; p * p];
    let mut phi = vec![1.0; d + 1];
    for i in 0..data.len() {
        phi[..d].copy_from_slice(data.row(i));
        let probs = softmax(
            &state
                .logits(data.row(i))
                .expect("dimension checked by subset"),
        );
        for c in 0..k {
            for c2 in 0..k {
                let w = if c == c2 {
                    probs[c] * (1.0 - probs[c])
                } else {
                    -probs[c] * probs[c2]
                };
                if w == 0.0 {
                    continue;
                }
                for j in 0..=d {
                    let row = softmax_index(k, d, c, j) * p;
                    let wj = w * phi[j];
                    for (j2, &f) in phi.iter().enumerate() {
                        h[row + softmax_index(k, d, c2, j2)] += wj * f;
                    }
                }
            }
        }
    }
    Matrix::from_vec(p, p, h).expect("square by construction")
}

fn softmax_gradient_sum(state: &ModelState, data: &Dataset) -> Vec<f64> {
    let mut net = state.arch.network(state.scheme);
    let mut g = vec![0.0; state.params.len()];
    let mut dl = vec![0.0; state.arch.num_classes];
    for i in 0..data.len() {
        let probs = net.probabilities(&state.params, data.row(i));
        cross_entropy_grad(&probs, data.class(i), &mut dl);
        net.backward(&state.params, &dl, &mut g);
    }
    g
}

/// Learns a fresh model on the retain set; the control every unlearner is compared against.
pub fn unlearn_retrain(
    template: &ModelState,
    retain: &Dataset,
    cfg: &SchemeConfig,
    security_param: u32,
    rng: &mut RngStream,
) -> Result<(ModelState, CostMeter)> {
    let fresh = init(
        template.scheme,
        &template.arch,
        security_param,
        &mut rng.derive_named("init"),
    )?;
    let (model, _, cost) = learn_with(
        &fresh,
        retain,
        cfg,
        &mut rng.derive_named("learn"),
        Tracking::Skip,
    )?;
    Ok((model, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_blobs, make_regression, TaskKind};
    use crate::schemes::{learn, Architecture};

    fn reg_state(x: Vec<Vec<f64>>, y: Vec<f64>, ridge: f64) -> (ModelState, Dataset) {
        let n = x[0].len();
        let ids = (0..x.len() as u64).collect();
        let ds =
            Dataset::new(Matrix::from_rows(&x).unwrap(), y, TaskKind::Regression, ids).unwrap();
        let s0 = init(
            SchemeId::LinearRegression,
            &Architecture::regression(n),
            1,
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        let cfg = SchemeConfig {
            ridge,
            ..Default::default()
        };
        (
            learn(&s0, &ds, &cfg, &mut RngStream::new(0, 0)).unwrap().0,
            ds,
        )
    }

    #[test]
    fn downdate_small_fixture() {
        let (s, ds) = reg_state(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0, 3.0],
            0.0,
        );
        let (u, _) = unlearn_linreg_downdate(&s, &ds, &[2]).unwrap();
        assert!((u.params[0] - 1.0).abs() < 1e-12 && (u.params[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn downdate_singular_and_ridge_rescue() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let (s, ds) = reg_state(x.clone(), vec![1.0, 1.0, 2.0], 0.0);
        assert!(matches!(
            unlearn_linreg_downdate(&s, &ds, &[2]),
            Err(Error::SingularDowndate { .. })
        ));
        let (s, ds) = reg_state(x, vec![1.0, 1.0, 2.0], 0.1);
        assert!(unlearn_linreg_downdate(&s, &ds, &[2]).is_ok());
    }

    #[test]
    fn downdate_empty_forget_is_identity() {
        let (ds, _) = make_regression(40, 3, 0.3, &mut RngStream::new(1, 1)).unwrap();
        let s0 = init(
            SchemeId::LinearRegression,
            &Architecture::regression(3),
            1,
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        let s = learn(
            &s0,
            &ds,
            &SchemeConfig::default(),
            &mut RngStream::new(0, 0),
        )
        .unwrap()
        .0;
        assert!(unlearn_linreg_downdate(&s, &ds, &[])
            .unwrap()
            .0
            .bitwise_eq(&s));
    }

    #[test]
    fn newton_on_quadratic_matches_downdate() {
        let (ds, _) = make_regression(60, 4, 0.5, &mut RngStream::new(2, 2)).unwrap();
        let s0 = init(
            SchemeId::LinearRegression,
            &Architecture::regression(4),
            1,
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        let cfg = SchemeConfig::default();
        let (s, t, _) = learn(&s0, &ds, &cfg, &mut RngStream::new(0, 0)).unwrap();
        let forget = [3, 17, 40];
        let req = UnlearnRequest {
            original: &s,
            transcript: &t,
            train: &ds,
            forget: &forget,
            scheme_cfg: &cfg,
            security_param: 1,
        };
        let (newton, _) = unlearn_newton_removal(&req, 0.0, 0.0, 0).unwrap();
        let (sm, _) = unlearn_linreg_downdate(&s, &ds, &forget).unwrap();
        for (a, b) in newton.params.iter().zip(&sm.params) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ssd_limits() {
        let ds = make_blobs(3, 20, 4, 1.0, &mut RngStream::new(3, 3)).unwrap();
        let arch = Architecture::classifier(4, 3, vec![8]);
        let s0 = init(SchemeId::Mlp, &arch, 1, &mut RngStream::new(3, 1)).unwrap();
        let s = learn(
            &s0,
            &ds,
            &SchemeConfig {
                epochs: 5,
                ..Default::default()
            },
            &mut RngStream::new(3, 2),
        )
        .unwrap()
        .0;
        let (same, census, _) = unlearn_ssd(&s, &ds, &[], 100.0, 1.0).unwrap();
        assert!(same.bitwise_eq(&s));
        assert_eq!(census.selected, 0);
        // A tiny α selects something; λ → 0 zeroes every selected parameter.
        let (u, census, _) = unlearn_ssd(&s, &ds, &[0, 1], 1.0, 1e-300).unwrap();
        assert!(census.selected > 0);
        let vanished = u
            .params
            .iter()
            .zip(&s.params)
            .filter(|(a, b)| a.abs() < 1e-290 && **b != 0.0)
            .count();
        assert_eq!(vanished, census.selected);
    }

    #[test]
    fn newton_rejects_non_convex() {
        let ds = make_blobs(2, 10, 3, 1.0, &mut RngStream::new(4, 4)).unwrap();
        let s = init(
            SchemeId::Mlp,
            &Architecture::classifier(3, 2, vec![4]),
            1,
            &mut RngStream::new(4, 1),
        )
        .unwrap();
        let t = TrainingTranscript::default();
        let cfg = SchemeConfig::default();
        let req = UnlearnRequest {
            original: &s,
            transcript: &t,
            train: &ds,
            forget: &[1],
            scheme_cfg: &cfg,
            security_param: 1,
        };
        assert!(matches!(
            unlearn_newton_removal(&req, 0.0, 0.0, 0),
            Err(Error::NotConvexScheme(_))
        ));
    }

    #[test]
    fn softmax_hessian_matches_gradient_differences() {
        let ds = make_blobs(3, 5, 2, 1.0, &mut RngStream::new(5, 5)).unwrap();
        let s = init(
            SchemeId::Logistic,
            &Architecture::classifier(2, 3, vec![]),
            1,
            &mut RngStream::new(5, 1),
        )
        .unwrap();
        let h = softmax_hessian(&s, &ds);
        let p = s.params.len();
        let eps = 1e-6;
        for j in 0..p {
            let mut up = s.clone();
            up.params[j] += eps;
            let mut down = s.clone();
            down.params[j] -= eps;
            let (gu, gd) = (
                softmax_gradient_sum(&up, &ds),
                softmax_gradient_sum(&down, &ds),
            );
            for i in 0..p {
                let fd = (gu[i] - gd[i]) / (2.0 * eps);
                assert!(
                    (fd - h.get(i, j)).abs() < 1e-6,
                    "({i},{j}) {fd} vs {}",
                    h.get(i, j)
                );
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let randomized: Vec<_> = Method::ALL
            .into_iter()
            .filter(|m| m.is_randomized())
            .collect();
        assert_eq!(
            randomized,
            [Method::BadTeacher, Method::Retrain, Method::DpOracle]
        );
    }
}
