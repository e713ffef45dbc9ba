//! The perfect-unlearning identity suite: unlearning must reproduce retraining.

use std::fmt::Write as _;

use unlearn_arena::datasets::{make_blobs, make_regression, Dataset, TaskKind};
use unlearn_arena::numerics::{Matrix, RngStream};
use unlearn_arena::schemes::{
    init, learn, predict_all, Architecture, ModelState, SchemeConfig, SchemeId,
};
use unlearn_arena::unlearners::{
    unlearn_knn_delete, unlearn_linreg_downdate, unlearn_linreg_downdate_skipping_moment,
};
use unlearn_arena::Error;

pub const REGRESSION_INSTANCES: usize = 100;
pub const REGRESSION_ROWS: usize = 200;
pub const REGRESSION_DIMS: usize = 5;
pub const REGRESSION_FORGET: usize = 10;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;
pub const KNN_INSTANCES: usize = 20;
const SUITE_SEED: u64 = 0x005e_ed0f_9e7f;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuiteOptions {
    /// Skip the `Xᵀy` update in every downdate.
    pub inject_fault: bool,
    pub ridge: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
    /// Largest relative coefficient error over the regression instances.
    pub max_relative_error: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{mark} {}: {}", c.name, c.detail);
        }
        let _ = writeln!(
            out,
            "max relative error over regression instances: {:.3e}",
            self.max_relative_error
        );
        let passed = self.cases.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "{passed}/{} cases passed", self.cases.len());
        out
    }
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

fn pick(n: usize, k: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.index(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

fn retain_of(data: &Dataset, forget: &[u64]) -> Result<Dataset, Error> {
    data.without(forget)
}

fn linreg_fit(data: &Dataset, ridge: f64) -> Result<ModelState, Error> {
    let s0 = init(
        SchemeId::LinearRegression,
        &Architecture::regression(data.dim()),
        1,
        &mut RngStream::new(0, 0),
    )?;
    let cfg = SchemeConfig {
        ridge,
        ..SchemeConfig::default()
    };
    Ok(learn(&s0, data, &cfg, &mut RngStream::new(0, 0))?.0)
}

fn downdate(
    state: &ModelState,
    data: &Dataset,
    forget: &[u64],
    opts: SuiteOptions,
) -> Result<ModelState, Error> {
    let f = if opts.inject_fault {
        unlearn_linreg_downdate_skipping_moment
    } else {
        unlearn_linreg_downdate
    };
    Ok(f(state, data, forget)?.0)
}

/// Downdate vs. retrain on one regression instance; returns the relative coefficient error.
pub fn regression_instance(index: usize, opts: SuiteOptions) -> Result<f64, Error> {
    let rng = RngStream::new(SUITE_SEED, index as u64);
    let (data, _) = make_regression(
        REGRESSION_ROWS,
        REGRESSION_DIMS,
        0.5,
        &mut rng.derive_named("data"),
    )?;
    let forget: Vec<u64> = pick(
        data.len(),
        REGRESSION_FORGET,
        &mut rng.derive_named("forget"),
    )
    .into_iter()
    .map(|i| data.id(i))
    .collect();
    let original = linreg_fit(&data, opts.ridge)?;
    let unlearned = downdate(&original, &data, &forget, opts)?;
    let retrained = linreg_fit(&retain_of(&data, &forget)?, opts.ridge)?;
    Ok(relative_error(&unlearned.params, &retrained.params))
}

/// k-NN deletion vs. retrain on one blob instance: stores and predictions must be bitwise equal.
pub fn knn_instance(index: usize) -> Result<bool, Error> {
    let rng = RngStream::new(SUITE_SEED ^ 0x6b6e6e, index as u64);
    let k = [1, 3, 5][index % 3];
    let all = make_blobs(4, 60, 3, 1.5, &mut rng.derive_named("data"))?;
    let held_out: Vec<u64> = pick(all.len(), 40, &mut rng.derive_named("test"))
        .into_iter()
        .map(|i| all.id(i))
        .collect();
    let test = all.subset(&held_out)?;
    let data = all.without(&held_out)?;
    let forget: Vec<u64> = pick(data.len(), 15, &mut rng.derive_named("forget"))
        .into_iter()
        .map(|i| data.id(i))
        .collect();
    let arch = Architecture::classifier(3, 4, Vec::new());
    let cfg = SchemeConfig {
        k,
        ..SchemeConfig::default()
    };
    let s0 = init(SchemeId::Knn, &arch, 1, &mut RngStream::new(0, 0))?;
    let original = learn(&s0, &data, &cfg, &mut RngStream::new(0, 0))?.0;
    let (unlearned, _) = unlearn_knn_delete(&original, &forget)?;
    let retrained = learn(
        &s0,
        &retain_of(&data, &forget)?,
        &cfg,
        &mut RngStream::new(0, 0),
    )?
    .0;
    let same_predictions = predict_all(&unlearned, &test)? == predict_all(&retrained, &test)?;
    Ok(unlearned.bitwise_eq(&retrained) && same_predictions)
}

/// Forgetting that leaves `XᵀX` singular: without ridge both paths must report it,
/// with ridge both must succeed and agree.
fn singular_fixture(
    name: &str,
    rows: Vec<Vec<f64>>,
    forget: Vec<u64>,
    opts: SuiteOptions,
) -> CaseResult {
    let y: Vec<f64> = (0..rows.len()).map(|i| 1.0 + i as f64).collect();
    let ids = (0..rows.len() as u64).collect();
    let outcome = (|| -> Result<(bool, String), Error> {
        let data = Dataset::new(Matrix::from_rows(&rows)?, y, TaskKind::Regression, ids)?;
        let original = linreg_fit(&data, opts.ridge)?;
        let unlearned = downdate(&original, &data, &forget, opts);
        let retrained = linreg_fit(&retain_of(&data, &forget)?, opts.ridge);
        Ok(match (unlearned, retrained) {
            (
                Err(Error::SingularDowndate { .. }),
                Err(Error::DegenerateGram { .. } | Error::NotPositiveDefinite { .. }),
            ) if opts.ridge == 0.0 => (
                true,
                "singularity reported by both downdate and retrain".into(),
            ),
            (Ok(u), Ok(r)) => {
                let e = relative_error(&u.params, &r.params);
                (e <= RELATIVE_TOLERANCE, format!("relative error {e:.3e}"))
            }
            (u, r) => (
                false,
                format!(
                    "downdate {}, retrain {}",
                    u.map(|_| "succeeded".to_string())
                        .unwrap_or_else(|e| e.to_string()),
                    r.map(|_| "succeeded".to_string())
                        .unwrap_or_else(|e| e.to_string())
                ),
            ),
        })
    })();
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, e.to_string()));
    CaseResult {
        name: name.into(),
        passed,
        detail,
    }
}

pub fn run_suite(opts: SuiteOptions) -> SuiteReport {
    let mut report = SuiteReport::default();
    let mut failures = 0;
    let mut errors = Vec::new();
    for i in 0..REGRESSION_INSTANCES {
        match regression_instance(i, opts) {
            Ok(e) => {
                report.max_relative_error = report.max_relative_error.max(e);
                failures += usize::from(!(e <= RELATIVE_TOLERANCE));
            }
            Err(e) => errors.push(format!("instance {i}: {e}")),
        }
    }
    report.cases.push(CaseResult {
        name: "linear-regression downdate".into(),
        passed: failures == 0 && errors.is_empty(),
        detail: match errors.first() {
            Some(e) => format!("{} errors, first {e}", errors.len()),
            None => format!(
                "{}/{REGRESSION_INSTANCES} instances within relative {RELATIVE_TOLERANCE:e} (m={REGRESSION_ROWS}, n={REGRESSION_DIMS}, max error {:.3e})",
                REGRESSION_INSTANCES - failures,
                report.max_relative_error
            ),
        },
    });
    let knn: Vec<Result<bool, Error>> = (0..KNN_INSTANCES).map(knn_instance).collect();
    let knn_ok = knn.iter().filter(|r| matches!(r, Ok(true))).count();
    report.cases.push(CaseResult {
        name: "k-nn deletion".into(),
        passed: knn_ok == KNN_INSTANCES,
        detail: format!("{knn_ok}/{KNN_INSTANCES} instances bitwise equal to retrain"),
    });
    report.cases.push(singular_fixture(
        "singular: duplicate column support",
        vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![2],
        opts,
    ));
    report.cases.push(singular_fixture(
        "singular: fewer rows than columns",
        vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ],
        vec![0, 3],
        opts,
    ));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let r = run_suite(SuiteOptions::default());
        assert!(r.passed(), "{}", r.render());
        assert!(r.max_relative_error <= RELATIVE_TOLERANCE);
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = run_suite(SuiteOptions {
            inject_fault: true,
            ridge: 0.0,
        });
        assert!(!r.cases[0].passed);
        assert!(r.max_relative_error > 1e-3);
    }

    #[test]
    fn ridge_makes_singular_fixtures_solvable() {
        let r = run_suite(SuiteOptions {
            inject_fault: false,
            ridge: 0.1,
        });
        assert!(r.cases.iter().all(|c| c.passed), "{}", r.render());
        assert!(r.cases[2].detail.starts_with("relative error"));
    }
}
