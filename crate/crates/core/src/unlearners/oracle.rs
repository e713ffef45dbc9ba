//! Query-counted inference access, optionally with Laplace output perturbation.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::numerics::prob::softmax;
use crate::numerics::RngStream;
use crate::schemes::{infer, ModelState};

/// Logits are shifted so their maximum sits at `LOGIT_CLAMP`, then clamped to
/// `[-LOGIT_CLAMP, LOGIT_CLAMP]` before noise is added. The shift leaves the
/// softmax unchanged, so only classes more than `2 · LOGIT_CLAMP` below the top
/// logit are distorted, and their mass is below `e⁻²⁰` each.
pub const LOGIT_CLAMP: f64 = 10.0;

/// Per-query L1 sensitivity of a clamped logit vector coordinate.
pub const SENSITIVITY: f64 = 2.0 * LOGIT_CLAMP;

#[derive(Clone, Debug, PartialEq)]
pub struct DpNoise {
    pub epsilon: f64,
    pub delta: f64,
    /// `epsilon / budget`.
    pub per_query_epsilon: f64,
    pub scale: f64,
}

/// Black-box handle on a model: answers `infer` queries up to a budget.
#[derive(Clone, Debug)]
pub struct InferenceOracle {
    state: ModelState,
    budget: u64,
    used: u64,
    noise: Option<DpNoise>,
    rng: RngStream,
}

impl InferenceOracle {
    /// Noise-free oracle.
    pub fn new(state: ModelState, budget: u64) -> Self {
        Self {
            state,
            budget,
            used: 0,
            noise: None,
            rng: RngStream::new(0, 0),
        }
    }

    pub fn queries_used(&self) -> u64 {
        self.used
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn noise(&self) -> Option<&DpNoise> {
        self.noise.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.state.arch.input_dim
    }

    pub fn query(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted {
                budget: self.budget,
            });
        }
        let answer = match &self.noise {
            None => infer(&self.state, x)?
                .into_distribution()
                .ok_or_else(|| Error::InvalidArgument("oracle needs a classifier".into()))?,
            Some(noise) => {
                let mut z = self.state.logits(x)?;
                let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for v in &mut z {
                    *v += LOGIT_CLAMP - top;
                    let e1: f64 = self.rng.sample(Exp1);
                    let e2: f64 = self.rng.sample(Exp1);
                    *v = v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP) + noise.scale * (e1 - e2);
                }
                softmax(&z)
            }
        };
        self.used += 1;
        Ok(answer)
    }

    /// Unwrapped prediction, bypassing the counter. Only the challenger may call this.
    pub fn reveal(&self) -> &ModelState {
        &self.state
    }
}

/// `softmax(clamp(logits − max logits + LOGIT_CLAMP) + Laplace(SENSITIVITY / ε′))` with `ε′ = ε / budget`.
pub fn wrap_dp_oracle(
    state: ModelState,
    epsilon: f64,
    delta: f64,
    budget: u64,
    rng: RngStream,
) -> Result<InferenceOracle> {
    if !state.scheme.is_parametric_classifier() {
        return Err(Error::NotParametric(state.scheme.to_string()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dp epsilon must be positive, got {epsilon}"
        )));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "dp delta must lie in [0, 1), got {delta}"
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "query budget must be positive".into(),
        ));
    }
    let per_query_epsilon = epsilon / budget as f64;
    let noise = DpNoise {
        epsilon,
        delta,
        per_query_epsilon,
        scale: SENSITIVITY / per_query_epsilon,
    };
    Ok(InferenceOracle {
        state,
        budget,
        used: 0,
        noise: Some(noise),
        rng,
    })
}
