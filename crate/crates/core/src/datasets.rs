//! Seeded synthetic data, splits and forget-set selection.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Distance of blob centres from the origin.
pub const BLOB_RADIUS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Classification { num_classes: usize },
    Regression,
}

/// Feature rows with labels and stable example ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix<f64>,
    labels: Vec<f64>,
    task: TaskKind,
    ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        features: Matrix<f64>,
        labels: Vec<f64>,
        task: TaskKind,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let m = features.rows();
        for len in [labels.len(), ids.len()] {
            if len != m {
                return Err(Error::LengthMismatch {
                    expected: m,
                    actual: len,
                });
            }
        }
        if features
            .as_slice()
            .iter()
            .chain(&labels)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite feature or label".into()));
        }
        if let TaskKind::Classification { num_classes } = task {
            if let Some(bad) = labels
                .iter()
                .find(|&&l| l < 0.0 || l.fract() != 0.0 || l as usize >= num_classes)
            {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} outside 0..{num_classes}"
                )));
            }
        }
        let mut seen = HashSet::with_capacity(m);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidArgument(format!("duplicate id {dup}")));
        }
        Ok(Self {
            features,
            labels,
            task,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.task {
            TaskKind::Classification { num_classes } => Some(num_classes),
            TaskKind::Regression => None,
        }
    }

    pub fn features(&self) -> &Matrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Class index of example `i` (classification only).
    pub fn class(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    /// Position of every id.
    pub fn index(&self) -> HashMap<u64, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect()
    }

    /// The examples with the given ids, in the order given.
    pub fn subset(&self, ids: &[u64]) -> Result<Dataset> {
        let index = self.index();
        let dim = self.dim();
        let mut data = Vec::with_capacity(ids.len() * dim);
        let mut labels = Vec::with_capacity(ids.len());
        for &id in ids {
            let &i = index.get(&id).ok_or(Error::UnknownId(id))?;
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            features: Matrix::from_vec(ids.len(), dim, data)?,
            labels,
            task: self.task,
            ids: ids.to_vec(),
        })
    }

    /// All examples except the given ids, in dataset order.
    pub fn without(&self, ids: &[u64]) -> Result<Dataset> {
        let drop: HashSet<u64> = ids.iter().copied().collect();
        let index = self.index();
        if let Some(&missing) = ids.iter().find(|id| !index.contains_key(id)) {
            return Err(Error::UnknownId(missing));
        }
        let keep: Vec<u64> = self
            .ids
            .iter()
            .copied()
            .filter(|id| !drop.contains(id))
            .collect();
        self.subset(&keep)
    }

    /// Flat text table: `id,label,f0,…,f{n-1}`, floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label");
        for j in 0..self.dim() {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{},{}", self.ids[i], fmt_f64(self.labels[i]));
            for v in self.row(i) {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, task: TaskKind) -> Result<Dataset> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("missing header".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
            return Err(Error::InvalidArgument(format!("bad header {header:?}")));
        }
        let dim = cols.len() - 2;
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(Error::InvalidArgument(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 2,
                    fields.len()
                )));
            }
            let bad =
                |what: &str| Error::InvalidArgument(format!("line {}: bad {what}", lineno + 2));
            ids.push(fields[0].parse::<u64>().map_err(|_| bad("id"))?);
            labels.push(fields[1].parse::<f64>().map_err(|_| bad("label"))?);
            for f in &fields[2..] {
                data.push(f.parse::<f64>().map_err(|_| bad("feature"))?);
            }
        }
        Dataset::new(Matrix::from_vec(ids.len(), dim, data)?, labels, task, ids)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Gaussian clusters around seeded centres at distance [`BLOB_RADIUS`] from the origin.
///
/// Example `i` belongs to class `i % num_classes`, so any id range is class-balanced.
pub fn make_blobs(
    num_classes: usize,
    per_class: usize,
    dims: usize,
    spread: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 || dims == 0 || !(spread > 0.0) {
        return Err(Error::InvalidArgument(
            "make_blobs needs positive counts and spread".into(),
        ));
    }
    let mut centre_rng = rng.derive_named("centres");
    let centres: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let g: Vec<f64> = (0..dims).map(|_| centre_rng.standard_normal()).collect();
            let norm = g
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            g.into_iter().map(|v| BLOB_RADIUS * v / norm).collect()
        })
        .collect();
    let m = num_classes * per_class;
    let mut point_rng = rng.derive_named("points");
    let mut data = Vec::with_capacity(m * dims);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let c = i % num_classes;
        for centre in &centres[c] {
            data.push(centre + spread * point_rng.standard_normal());
        }
        labels.push(c as f64);
    }
    Dataset::new(
        Matrix::from_vec(m, dims, data)?,
        labels,
        TaskKind::Classification { num_classes },
        (0..m as u64).collect(),
    )
}

/// `y = X a* + ε` with standard-normal `X`, seeded `a*` and `ε ~ N(0, noise_sd²)`.
///
/// Returns the dataset together with the generating coefficients.
pub fn make_regression(
    m: usize,
    n: usize,
    noise_sd: f64,
    rng: &mut RngStream,
) -> Result<(Dataset, Vec<f64>)> {
    if m <= n || n == 0 || !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "make_regression needs m > n >= 1 and noise >= 0 (m={m}, n={n})"
        )));
    }
    let mut coef_rng = rng.derive_named("coefficients");
    let truth: Vec<f64> = (0..n).map(|_| coef_rng.standard_normal()).collect();
    let mut x_rng = rng.derive_named("design");
    let mut noise_rng = rng.derive_named("noise");
    let mut data = Vec::with_capacity(m * n);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| x_rng.standard_normal()).collect();
        let clean: f64 = row.iter().zip(&truth).map(|(x, a)| x * a).sum();
        let y = if noise_sd > 0.0 {
            clean + noise_sd * noise_rng.standard_normal()
        } else {
            clean
        };
        data.extend(row);
        labels.push(y);
    }
    let ds = Dataset::new(
        Matrix::from_vec(m, n, data)?,
        labels,
        TaskKind::Regression,
        (0..m as u64).collect(),
    )?;
    Ok((ds, truth))
}

/// Disjoint id lists for training, utility measurement and shadow-model training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
    pub population: Vec<u64>,
}

impl SplitPlan {
    /// Random disjoint split of `ids`; each list is returned sorted.
    pub fn random(
        ids: &[u64],
        train: usize,
        test: usize,
        population: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let needed = train + test + population;
        if needed > ids.len() {
            return Err(Error::InsufficientPopulation {
                available: ids.len(),
                needed,
            });
        }
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(rng);
        let take = |range: std::ops::Range<usize>| {
            let mut v = shuffled[range].to_vec();
            v.sort_unstable();
            v
        };
        Ok(Self {
            train: take(0..train),
            test: take(train..train + test),
            population: take(train + test..needed),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgetStrategy {
    RandomSubset,
    Classwise(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetSelection {
    pub strategy: ForgetStrategy,
    pub size: usize,
    /// Sorted ascending.
    pub forget_ids: Vec<u64>,
}

impl ForgetSelection {
    /// `train` minus the forget ids, preserving the order of `train`.
    pub fn retain(&self, train: &[u64]) -> Vec<u64> {
        let drop: HashSet<u64> = self.forget_ids.iter().copied().collect();
        train
            .iter()
            .copied()
            .filter(|id| !drop.contains(id))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.forget_ids.is_empty()
    }
}

/// Picks a forget set that is a proper subset of `train`.
///
/// `size` is ignored for the classwise strategy.
pub fn select_forget(
    dataset: &Dataset,
    train: &[u64],
    strategy: ForgetStrategy,
    size: usize,
    rng: &mut RngStream,
) -> Result<ForgetSelection> {
    let mut forget_ids = match strategy {
        ForgetStrategy::RandomSubset => {
            if size >= train.len() {
                return Err(Error::ForgetTooLarge {
                    size,
                    train: train.len(),
                });
            }
            index::sample(rng, train.len(), size)
                .into_iter()
                .map(|i| train[i])
                .collect::<Vec<_>>()
        }
        ForgetStrategy::Classwise(class) => {
            let pos = dataset.index();
            let mut ids = Vec::new();
            for &id in train {
                let &i = pos.get(&id).ok_or(Error::UnknownId(id))?;
                if dataset.label(i) == class as f64 {
                    ids.push(id);
                }
            }
            if ids.is_empty() {
                return Err(Error::EmptyClass(class));
            }
            if ids.len() == train.len() {
                return Err(Error::ForgetTooLarge {
                    size: ids.len(),
                    train: train.len(),
                });
            }
            ids
        }
    };
    forget_ids.sort_unstable();
    Ok(ForgetSelection {
        strategy,
        size: forget_ids.len(),
        forget_ids,
    })
}
