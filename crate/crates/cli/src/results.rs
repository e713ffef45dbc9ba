//! `results.csv` rows, plot-data files, and merging of result directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};
use unlearn_arena::game::GameReport;
use unlearn_arena::numerics::jeffreys_interval;

use crate::CliError;

/// First line of every results file.
pub const SCHEMA_LINE: &str = "#schema=unlearn-arena/results/v1";

pub const HEADER: &str = "experiment_id,method,distinguisher,mode,forget_size,sigma,trials,wins,success_rate,ci_lo,ci_hi,significant,mean_kld_unlearned,mean_kld_control,util_orig,util_control,util_unlearned,cost_unlearn,cost_retrain,seed";

fn sci<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:.16e}"))
}

fn sci_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => sci(v, s),
        None => s.serialize_str(""),
    }
}

/// One configuration point of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub method: String,
    pub distinguisher: String,
    pub mode: String,
    pub forget_size: usize,
    #[serde(serialize_with = "sci")]
    pub sigma: f64,
    pub trials: u64,
    pub wins: u64,
    #[serde(serialize_with = "sci")]
    pub success_rate: f64,
    #[serde(serialize_with = "sci")]
    pub ci_lo: f64,
    #[serde(serialize_with = "sci")]
    pub ci_hi: f64,
    pub significant: bool,
    #[serde(serialize_with = "sci_opt")]
    pub mean_kld_unlearned: Option<f64>,
    #[serde(serialize_with = "sci_opt")]
    pub mean_kld_control: Option<f64>,
    #[serde(serialize_with = "sci")]
    pub util_orig: f64,
    #[serde(serialize_with = "sci")]
    pub util_control: f64,
    #[serde(serialize_with = "sci")]
    pub util_unlearned: f64,
    pub cost_unlearn: u64,
    pub cost_retrain: u64,
    pub seed: u64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ResultRow {
    pub fn from_report(experiment_id: &str, report: &GameReport) -> Self {
        let c = &report.config;
        let s = &report.summary;
        let kld = c.distinguisher.kind == unlearn_arena::distinguishers::DistinguisherKind::Kld;
        let u = report.mean_utilities();
        let cost = report.mean_costs();
        Self {
            experiment_id: experiment_id.into(),
            method: c.unlearner.method.to_string(),
            distinguisher: c.distinguisher.kind.to_string(),
            mode: c.mode.name().into(),
            forget_size: c.forget_size,
            sigma: c.unlearner.newton_sigma,
            trials: s.trials,
            wins: s.wins,
            success_rate: s.success_rate,
            ci_lo: s.interval.lo,
            ci_hi: s.interval.hi,
            significant: s.significant,
            mean_kld_unlearned: if kld {
                mean(&report.scores_unlearned())
            } else {
                None
            },
            mean_kld_control: if kld {
                mean(&report.scores_control())
            } else {
                None
            },
            util_orig: u.original,
            util_control: u.control,
            util_unlearned: u.unlearned,
            cost_unlearn: cost.unlearn,
            cost_retrain: cost.retrain,
            seed: c.master_seed,
        }
    }
}

/// Schema line, header and rows.
pub fn render_rows(rows: &[ResultRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    let body =
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8");
    let body = if rows.is_empty() {
        format!("{HEADER}\n")
    } else {
        body
    };
    format!("{SCHEMA_LINE}\n{body}")
}

pub fn parse_rows(text: &str, origin: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first != SCHEMA_LINE {
        return Err(CliError::MixedSchemaVersions {
            path: origin.to_path_buf(),
            found: first.to_string(),
        });
    }
    let rest: String = text[first.len()..]
        .trim_start_matches(['\r', '\n'])
        .to_string();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(rest.as_bytes());
    let header = r
        .headers()
        .map_err(|e| bad_csv(origin, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != HEADER {
        return Err(CliError::MixedSchemaVersions {
            path: origin.to_path_buf(),
            found: header,
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e| bad_csv(origin, e)))
        .collect()
}

fn bad_csv(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Long-format `series,x,y` plot data.
pub fn render_plot(points: &[(String, f64, f64)]) -> String {
    let mut out = String::from("series,x,y\n");
    for (series, x, y) in points {
        out.push_str(&format!("{series},{x:.16e},{y:.16e}\n"));
    }
    out
}

/// Every `results*.csv` under `dir`, one level of subdirectories deep, in path order.
pub fn find_result_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |e: std::io::Error| CliError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    };
    let mut found = Vec::new();
    let visit =
        |d: &Path, found: &mut Vec<PathBuf>, depth: usize| -> Result<Vec<PathBuf>, CliError> {
            let mut subdirs = Vec::new();
            for entry in std::fs::read_dir(d).map_err(io)? {
                let path = entry.map_err(io)?.path();
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                if path.is_dir() && depth == 0 {
                    subdirs.push(path);
                } else if name.starts_with("results") && name.ends_with(".csv") {
                    found.push(path);
                }
            }
            Ok(subdirs)
        };
    for sub in visit(dir, &mut found, 0)? {
        visit(&sub, &mut found, 1)?;
    }
    found.sort();
    Ok(found)
}

/// Identity of a configuration point across runs.
type PointKey = (String, String, String, usize, u64);

/// Pools rows describing the same configuration point; intervals come from the pooled counts.
pub fn merge_rows(rows: &[ResultRow]) -> Result<Vec<ResultRow>, CliError> {
    let mut groups: BTreeMap<PointKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.method.clone(),
            r.distinguisher.clone(),
            r.mode.clone(),
            r.forget_size,
            r.sigma.to_bits(),
        );
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for group in groups.values() {
        let trials: u64 = group.iter().map(|r| r.trials).sum();
        let wins: u64 = group.iter().map(|r| r.wins).sum();
        let interval = jeffreys_interval(wins, trials, 0.95)?;
        let weighted = |f: fn(&ResultRow) -> f64| {
            group.iter().map(|r| f(r) * r.trials as f64).sum::<f64>() / trials as f64
        };
        let weighted_opt = |f: fn(&ResultRow) -> Option<f64>| {
            let present: Vec<_> = group
                .iter()
                .filter_map(|r| f(r).map(|v| (v, r.trials as f64)))
                .collect();
            let n: f64 = present.iter().map(|p| p.1).sum();
            (n > 0.0).then(|| present.iter().map(|(v, t)| v * t).sum::<f64>() / n)
        };
        let weighted_int = |f: fn(&ResultRow) -> u64| {
            group.iter().map(|r| f(r) * r.trials).sum::<u64>() / trials.max(1)
        };
        let first = group[0];
        let mut seeds: Vec<u64> = group.iter().map(|r| r.seed).collect();
        seeds.dedup();
        out.push(ResultRow {
            experiment_id: group
                .iter()
                .map(|r| r.experiment_id.as_str())
                .collect::<Vec<_>>()
                .join("+"),
            method: first.method.clone(),
            distinguisher: first.distinguisher.clone(),
            mode: first.mode.clone(),
            forget_size: first.forget_size,
            sigma: first.sigma,
            trials,
            wins,
            success_rate: wins as f64 / trials as f64,
            ci_lo: interval.lo,
            ci_hi: interval.hi,
            significant: !interval.contains(0.5),
            mean_kld_unlearned: weighted_opt(|r| r.mean_kld_unlearned),
            mean_kld_control: weighted_opt(|r| r.mean_kld_control),
            util_orig: weighted(|r| r.util_orig),
            util_control: weighted(|r| r.util_control),
            util_unlearned: weighted(|r| r.util_unlearned),
            cost_unlearn: weighted_int(|r| r.cost_unlearn),
            cost_retrain: weighted_int(|r| r.cost_retrain),
            seed: if seeds.len() == 1 {
                seeds[0]
            } else {
                first.seed
            },
        });
    }
    Ok(out)
}

/// Success rate by forget size, one column per `method/distinguisher` series.
pub fn forget_table(rows: &[ResultRow]) -> String {
    pivot(
        rows,
        "forget_size",
        |r| r.forget_size as f64,
        |r| Some(r.success_rate),
    )
}

/// Mean scores by σ for the Newton-removal rows.
pub fn sigma_table(rows: &[ResultRow]) -> String {
    let newton: Vec<ResultRow> = rows
        .iter()
        .filter(|r| r.method == "newton-removal" && r.mean_kld_unlearned.is_some())
        .cloned()
        .collect();
    let mut sigmas: Vec<f64> = newton.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut out = String::from("sigma,mean_kld_unlearned,mean_kld_control\n");
    for s in sigmas {
        let at: Vec<&ResultRow> = newton.iter().filter(|r| r.sigma == s).collect();
        let n: f64 = at.iter().map(|r| r.trials as f64).sum();
        let avg = |f: fn(&ResultRow) -> Option<f64>| {
            at.iter()
                .map(|r| f(r).unwrap_or(0.0) * r.trials as f64)
                .sum::<f64>()
                / n
        };
        out.push_str(&format!(
            "{s:.16e},{:.16e},{:.16e}\n",
            avg(|r| r.mean_kld_unlearned),
            avg(|r| r.mean_kld_control)
        ));
    }
    out
}

fn pivot(
    rows: &[ResultRow],
    x_name: &str,
    x: fn(&ResultRow) -> f64,
    y: fn(&ResultRow) -> Option<f64>,
) -> String {
    let series: Vec<String> = {
        let mut s: Vec<String> = rows
            .iter()
            .map(|r| format!("{}/{}", r.method, r.distinguisher))
            .collect();
        s.sort();
        s.dedup();
        s
    };
    let mut xs: Vec<f64> = rows.iter().map(x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out = format!("{x_name},{}\n", series.join(","));
    for xv in xs {
        out.push_str(&format!("{xv}"));
        for s in &series {
            let cell = rows
                .iter()
                .find(|r| x(r) == xv && format!("{}/{}", r.method, r.distinguisher) == *s)
                .and_then(y)
                .map(|v| format!("{v:.16e}"))
                .unwrap_or_default();
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}
