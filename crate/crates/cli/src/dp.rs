//! Utility collapse of a DP-wrapped inference oracle as the privacy level becomes negligible.

use std::fmt::Write as _;

use unlearn_arena::datasets::Dataset;
use unlearn_arena::game::GameConfig;
use unlearn_arena::numerics::{argmax, median, RngStream};
use unlearn_arena::schemes::{init, learn_with, predict_all, ModelState, Tracking};
use unlearn_arena::unlearners::wrap_dp_oracle;
use unlearn_arena::Error;

/// Tolerance of the vanishing-noise check.
pub const HIGH_EPSILON_TOLERANCE: f64 = 0.02;
/// Tolerance of the collapse-to-baseline check.
pub const NEGLIGIBLE_EPSILON_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct DpPoint {
    /// Per-query privacy level.
    pub epsilon: f64,
    /// Level charged for the whole query sequence under basic composition.
    pub total_epsilon: f64,
    pub scale: f64,
    pub accuracies: Vec<f64>,
    pub median_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpCollapse {
    pub classes: usize,
    pub queries: usize,
    pub baseline: f64,
    pub unwrapped_accuracy: f64,
    pub points: Vec<DpPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpChecks {
    pub high_epsilon_matches_unwrapped: bool,
    pub negligible_epsilon_at_baseline: bool,
    pub monotone: bool,
}

impl DpChecks {
    pub fn passed(&self) -> bool {
        self.high_epsilon_matches_unwrapped && self.negligible_epsilon_at_baseline && self.monotone
    }
}

impl DpCollapse {
    /// Points ordered by decreasing ε.
    fn by_decreasing_epsilon(&self) -> Vec<&DpPoint> {
        let mut p: Vec<&DpPoint> = self.points.iter().collect();
        p.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        p
    }

    pub fn checks(&self) -> DpChecks {
        let p = self.by_decreasing_epsilon();
        let (Some(high), Some(low)) = (p.first(), p.last()) else {
            return DpChecks {
                high_epsilon_matches_unwrapped: false,
                negligible_epsilon_at_baseline: false,
                monotone: false,
            };
        };
        DpChecks {
            high_epsilon_matches_unwrapped: (high.median_accuracy - self.unwrapped_accuracy).abs()
                <= HIGH_EPSILON_TOLERANCE,
            negligible_epsilon_at_baseline: (low.median_accuracy - self.baseline).abs()
                <= NEGLIGIBLE_EPSILON_TOLERANCE,
            monotone: p
                .windows(2)
                .all(|w| w[1].median_accuracy <= w[0].median_accuracy),
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = String::from(
            "epsilon,total_epsilon,laplace_scale,median_accuracy,baseline,unwrapped_accuracy\n",
        );
        for p in self.by_decreasing_epsilon() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.epsilon,
                p.total_epsilon,
                p.scale,
                p.median_accuracy,
                self.baseline,
                self.unwrapped_accuracy
            );
        }
        out
    }

    pub fn render_summary(&self) -> String {
        let checks = self.checks();
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dp oracle utility collapse over {} queries, {} classes",
            self.queries, self.classes
        );
        let _ = writeln!(
            out,
            "unwrapped accuracy {:.4}, baseline 1/C = {:.4}",
            self.unwrapped_accuracy, self.baseline
        );
        for p in self.by_decreasing_epsilon() {
            let _ = writeln!(
                out,
                "  per-query epsilon {:.6e}: median accuracy {:.4} over {} repeats (laplace scale {:.3e})",
                p.epsilon,
                p.median_accuracy,
                p.accuracies.len(),
                p.scale
            );
        }
        let _ = writeln!(
            out,
            "{} largest epsilon within {HIGH_EPSILON_TOLERANCE} of unwrapped accuracy",
            mark(checks.high_epsilon_matches_unwrapped)
        );
        let _ = writeln!(
            out,
            "{} smallest epsilon within {NEGLIGIBLE_EPSILON_TOLERANCE} of baseline",
            mark(checks.negligible_epsilon_at_baseline)
        );
        let _ = writeln!(
            out,
            "{} accuracy non-increasing as epsilon decreases",
            mark(checks.monotone)
        );
        out
    }
}

/// The first `n` rows of `data`, cycling if it is shorter.
fn query_rows(data: &Dataset, n: usize) -> Vec<usize> {
    (0..n).map(|i| i % data.len()).collect()
}

/// Trains the configured classifier on the game's training split, then queries the
/// wrapped oracle on held-out population examples at each per-query `ε`.
pub fn demo_dp_collapse(
    cfg: &GameConfig,
    epsilons: &[f64],
    delta: f64,
    queries: usize,
    repeats: usize,
) -> Result<DpCollapse, Error> {
    let arena = unlearn_arena::game::Arena::new(cfg)?;
    let master = RngStream::new(cfg.master_seed, 0).derive_named("dp-collapse");
    let fresh = init(
        cfg.scheme,
        &arena.arch,
        cfg.security_param,
        &mut master.derive_named("init"),
    )?;
    let (model, _, _) = learn_with(
        &fresh,
        &arena.train,
        &cfg.training,
        &mut master.derive_named("learn"),
        Tracking::Skip,
    )?;
    let rows = query_rows(&arena.population, queries);
    let unwrapped = predict_all(&model, &arena.population)?;
    let correct = |pred: &[f64], i: usize| argmax(pred) == arena.population.class(i);
    let unwrapped_accuracy =
        rows.iter().filter(|&&i| correct(&unwrapped[i], i)).count() as f64 / queries as f64;
    let mut points = Vec::with_capacity(epsilons.len());
    for (e_idx, &epsilon) in epsilons.iter().enumerate() {
        let accuracies = (0..repeats)
            .map(|r| {
                oracle_accuracy(
                    &model,
                    &arena.population,
                    &rows,
                    epsilon,
                    delta,
                    master.derive(e_idx as u64).derive(r as u64),
                )
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        let probe = wrap_dp_oracle(
            model.clone(),
            epsilon * queries as f64,
            delta,
            queries as u64,
            RngStream::new(0, 0),
        )?;
        let noise = probe.noise().expect("wrapped oracle carries noise");
        points.push(DpPoint {
            epsilon,
            total_epsilon: noise.epsilon,
            scale: noise.scale,
            median_accuracy: median(&accuracies),
            accuracies,
        });
    }
    Ok(DpCollapse {
        classes: arena.arch.num_classes,
        queries,
        baseline: 1.0 / arena.arch.num_classes as f64,
        unwrapped_accuracy,
        points,
    })
}

fn oracle_accuracy(
    model: &ModelState,
    data: &Dataset,
    rows: &[usize],
    epsilon: f64,
    delta: f64,
    rng: RngStream,
) -> Result<f64, Error> {
    let budget = rows.len() as u64;
    let mut oracle = wrap_dp_oracle(model.clone(), epsilon * budget as f64, delta, budget, rng)?;
    let mut hits = 0usize;
    for &i in rows {
        let p = oracle.query(data.row(i))?;
        hits += usize::from(argmax(&p) == data.class(i));
    }
    Ok(hits as f64 / rows.len() as f64)
}
