//! Subcommands. Every command computes first and writes its files at the end.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use unlearn_arena::distinguishers::Direction;
use unlearn_arena::game::{run_game, GameConfig, GameReport};
use unlearn_arena::numerics::{median, spearman};
use unlearn_arena::unlearners::Method;

use crate::config::{ExperimentConfig, Overrides};
use crate::dp::demo_dp_collapse;
use crate::perfect::{run_suite, SuiteOptions};
use crate::results::{
    find_result_files, forget_table, merge_rows, parse_rows, render_plot, render_rows, sigma_table,
    ResultRow,
};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "unlearn-arena",
    version,
    about = "Computational-unlearning games on desk-scale models"
)]
pub struct Cli {
    /// Worker threads for trial execution (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Override the number of trials per game.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the output directory of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one game.
    Game(RunArgs),
    /// One game per (method, distinguisher, forget size).
    SweepForget(RunArgs),
    /// One Newton-removal game per σ.
    SweepSigma(RunArgs),
    /// Check that the perfect unlearners reproduce retraining.
    VerifyPerfect {
        /// Skip the `Xᵀy` downdate, which must make the suite fail.
        #[arg(long)]
        inject_fault: bool,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Also write the report to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy of a DP-wrapped oracle as ε becomes negligible.
    DemoDpCollapse(RunArgs),
    /// Merge results from a directory into aggregate tables.
    Report {
        dir: PathBuf,
        /// Where to write the aggregate (default: `<dir>/report`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Successful completion, or a run whose checked property failed (exit 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    PropertyFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::PropertyFailure => 2,
        }
    }
}

/// Files a command produces, written together once computation is done.
#[derive(Default)]
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn write(self) -> Result<(), CliError> {
        let io = |path: &Path, e: std::io::Error| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(Overrides::from_env(args.trials)?);
    cfg.validate()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn invalid_config(origin: &str, e: unlearn_arena::Error) -> CliError {
    CliError::Config {
        origin: origin.into(),
        message: e.to_string(),
    }
}

/// Trial records, each tagged with the experiment it belongs to.
fn tagged_jsonl(id: &str, report: &GameReport) -> String {
    let mut out = String::new();
    for line in report.to_jsonl().lines() {
        let mut value: serde_json::Value =
            serde_json::from_str(line).expect("records are valid json");
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("experiment_id".into(), serde_json::Value::String(id.into()));
        }
        out.push_str(&serde_json::to_string(&value).expect("json re-serializes"));
        out.push('\n');
    }
    out
}

fn describe(id: &str, report: &GameReport) -> String {
    let s = &report.summary;
    let c = &report.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "[{id}] {} / {} / {} / forget {}",
        c.unlearner.method,
        c.distinguisher.kind,
        c.mode.name(),
        c.forget_size
    );
    let _ = writeln!(
        out,
        "  wins {}/{} = {:.4}, 95% interval [{:.4}, {:.4}], {}",
        s.wins,
        s.trials,
        s.success_rate,
        s.interval.lo,
        s.interval.hi,
        if s.significant {
            "significant"
        } else {
            "not significant"
        }
    );
    if s.abstentions > 0 {
        let _ = writeln!(out, "  abstentions {}", s.abstentions);
    }
    if let Some(rule) = &s.rule {
        let _ = writeln!(
            out,
            "  rule {:?} at threshold {:.6e}{}",
            rule.direction,
            rule.threshold,
            if rule.degenerate {
                " (degenerate calibration)"
            } else {
                ""
            }
        );
    }
    if let Some(acc) = s.attack_accuracy {
        let _ = writeln!(out, "  attack held-out accuracy {acc:.4}");
    }
    let u = report.mean_utilities();
    let k = report.mean_costs();
    let _ = writeln!(
        out,
        "  utility original {:.4}, control {:.4}, unlearned {:.4}; cost unlearn {} vs retrain {}",
        u.original, u.control, u.unlearned, k.unlearn, k.retrain
    );
    let cs = &s.constraints;
    if cs.failing_trials > 0 || !s.aborted.is_empty() {
        let _ = writeln!(
            out,
            "  constraint failures: utility gap {}, cost {}; aborted trials {}{}",
            cs.utility_gap_failures,
            cs.cost_failures,
            s.aborted.len(),
            if cs.invalid_game {
                " -> INVALID GAME"
            } else {
                ""
            }
        );
    }
    out
}

struct GameRun {
    id: String,
    report: GameReport,
}

impl GameRun {
    fn row(&self) -> ResultRow {
        ResultRow::from_report(&self.id, &self.report)
    }
}

fn run_all(
    games: Vec<(String, GameConfig)>,
    log: &mut dyn Write,
) -> Result<Vec<GameRun>, CliError> {
    let mut runs = Vec::with_capacity(games.len());
    for (id, cfg) in games {
        let report = run_game(&cfg)?;
        let _ = log.write_all(describe(&id, &report).as_bytes());
        runs.push(GameRun { id, report });
    }
    Ok(runs)
}

fn standard_outputs(out: &mut Outputs, runs: &[GameRun]) -> String {
    let rows: Vec<ResultRow> = runs.iter().map(GameRun::row).collect();
    out.add("results.csv", render_rows(&rows));
    out.add(
        "trials.jsonl",
        runs.iter()
            .map(|r| tagged_jsonl(&r.id, &r.report))
            .collect(),
    );
    runs.iter().map(|r| describe(&r.id, &r.report)).collect()
}

fn status_of(runs: &[GameRun]) -> Status {
    if runs
        .iter()
        .any(|r| r.report.summary.constraints.invalid_game)
    {
        Status::PropertyFailure
    } else {
        Status::Ok
    }
}

fn cmd_game(args: &RunArgs, log: &mut dyn Write) -> Result<Status, CliError> {
    let (cfg, dir) = load(args)?;
    let id = format!("{}-game", cfg.output.name);
    let runs = run_all(vec![(id, cfg.game_config())], log)?;
    let mut out = Outputs::new(dir);
    let summary = standard_outputs(&mut out, &runs);
    out.add("summary.txt", summary);
    out.write()?;
    Ok(status_of(&runs))
}

fn cmd_sweep_forget(args: &RunArgs, log: &mut dyn Write) -> Result<Status, CliError> {
    let (cfg, dir) = load(args)?;
    let mut games = Vec::new();
    for &method in &cfg.sweep.methods {
        for &kind in &cfg.sweep.distinguishers {
            for &size in &cfg.sweep.forget_sizes {
                let mut g = cfg.game_config();
                g.unlearner.method = method;
                g.distinguisher.kind = kind;
                g.forget_size = size;
                let id = format!("{}-forget-{method}-{kind}-{size}", cfg.output.name);
                g.validate().map_err(|e| invalid_config(&id, e))?;
                games.push((id, g));
            }
        }
    }
    let runs = run_all(games, log)?;
    let mut out = Outputs::new(dir);
    let mut summary = standard_outputs(&mut out, &runs);
    let points: Vec<(String, f64, f64)> = runs
        .iter()
        .map(|r| {
            let c = &r.report.config;
            (
                format!("{}/{}", c.unlearner.method, c.distinguisher.kind),
                c.forget_size as f64,
                r.report.summary.success_rate,
            )
        })
        .collect();
    out.add("plot_forget.csv", render_plot(&points));
    for (series, trend) in forget_trends(&runs) {
        let _ = writeln!(
            summary,
            "trend {series}: largest-minus-smallest forget size success rate {trend:+.4}"
        );
    }
    let _ = log.write_all(
        summary
            .lines()
            .filter(|l| l.starts_with("trend"))
            .map(|l| format!("{l}\n"))
            .collect::<String>()
            .as_bytes(),
    );
    out.add("summary.txt", summary);
    out.write()?;
    Ok(status_of(&runs))
}

/// Success rate at the largest forget size minus that at the smallest, per series.
pub fn forget_trends_of(rows: &[ResultRow]) -> Vec<(String, f64)> {
    let mut series: Vec<String> = rows
        .iter()
        .map(|r| format!("{}/{}", r.method, r.distinguisher))
        .collect();
    series.sort();
    series.dedup();
    series
        .into_iter()
        .filter_map(|s| {
            let mut pts: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| format!("{}/{}", r.method, r.distinguisher) == s)
                .collect();
            pts.sort_by_key(|r| r.forget_size);
            let (first, last) = (pts.first()?, pts.last()?);
            Some((s, last.success_rate - first.success_rate))
        })
        .collect()
}

fn forget_trends(runs: &[GameRun]) -> Vec<(String, f64)> {
    forget_trends_of(&runs.iter().map(GameRun::row).collect::<Vec<_>>())
}

/// Shape of the σ sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaShape {
    pub sigmas: Vec<f64>,
    pub median_unlearned: Vec<f64>,
    pub median_control: Vec<f64>,
    pub directions: Vec<Option<Direction>>,
    pub spearman: f64,
    /// max/min of the control series; 1 when it is constant.
    pub control_ratio: f64,
}

impl SigmaShape {
    fn of(runs: &[GameRun]) -> Self {
        let sigmas: Vec<f64> = runs
            .iter()
            .map(|r| r.report.config.unlearner.newton_sigma)
            .collect();
        let median_unlearned: Vec<f64> = runs
            .iter()
            .map(|r| median(&r.report.scores_unlearned()))
            .collect();
        let median_control: Vec<f64> = runs
            .iter()
            .map(|r| median(&r.report.scores_control()))
            .collect();
        let means: Vec<f64> = runs
            .iter()
            .map(|r| mean(&r.report.scores_control()))
            .collect();
        let (lo, hi) = means
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        Self {
            directions: runs
                .iter()
                .map(|r| r.report.summary.rule.as_ref().map(|x| x.direction))
                .collect(),
            spearman: spearman(&sigmas, &median_unlearned),
            control_ratio: hi / lo,
            sigmas,
            median_unlearned,
            median_control,
        }
    }

    /// The calibrated rule points in different directions at the two ends of the grid.
    pub fn direction_flips(&self) -> bool {
        matches!((self.directions.first(), self.directions.last()), (Some(Some(a)), Some(Some(b))) if a != b)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cmd_sweep_sigma(args: &RunArgs, log: &mut dyn Write) -> Result<Status, CliError> {
    let (cfg, dir) = load(args)?;
    if cfg.unlearner.method != Method::NewtonRemoval {
        return Err(CliError::Config {
            origin: "unlearner.method".into(),
            message: format!(
                "the sigma sweep needs newton-removal, got {}",
                cfg.unlearner.method
            ),
        });
    }
    let mut sigmas = cfg.sweep.sigmas.clone();
    sigmas.sort_by(f64::total_cmp);
    let mut games = Vec::new();
    for &sigma in &sigmas {
        let mut g = cfg.game_config();
        g.unlearner.newton_sigma = sigma;
        let id = format!("{}-sigma-{sigma:e}", cfg.output.name);
        g.validate().map_err(|e| invalid_config(&id, e))?;
        games.push((id, g));
    }
    let runs = run_all(games, log)?;
    let mut out = Outputs::new(dir);
    let mut summary = standard_outputs(&mut out, &runs);
    let mut points = Vec::new();
    for r in &runs {
        let sigma = r.report.config.unlearner.newton_sigma;
        let (u, c) = (r.report.scores_unlearned(), r.report.scores_control());
        points.push(("mean_kld_unlearned".to_string(), sigma, mean(&u)));
        points.push(("mean_kld_control".to_string(), sigma, mean(&c)));
        points.push(("median_kld_unlearned".to_string(), sigma, median(&u)));
        points.push(("median_kld_control".to_string(), sigma, median(&c)));
    }
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.add("plot_sigma.csv", render_plot(&points));
    let shape = SigmaShape::of(&runs);
    let mut tail = String::new();
    let _ = writeln!(
        tail,
        "spearman(sigma, median unlearned score) = {:.6}",
        shape.spearman
    );
    let _ = writeln!(
        tail,
        "control mean max/min ratio = {:.17}",
        shape.control_ratio
    );
    let _ = writeln!(
        tail,
        "rule direction: {:?} at smallest sigma, {:?} at largest{}",
        shape.directions.first().copied().flatten(),
        shape.directions.last().copied().flatten(),
        if shape.direction_flips() {
            " (flips)"
        } else {
            ""
        }
    );
    let _ = log.write_all(tail.as_bytes());
    summary.push_str(&tail);
    out.add("summary.txt", summary);
    out.write()?;
    Ok(status_of(&runs))
}

fn cmd_verify_perfect(
    opts: SuiteOptions,
    out_dir: Option<&Path>,
    log: &mut dyn Write,
) -> Result<Status, CliError> {
    let report = run_suite(opts);
    let text = report.render();
    let _ = log.write_all(text.as_bytes());
    if let Some(dir) = out_dir {
        let mut out = Outputs::new(dir.to_path_buf());
        out.add("verify_perfect.txt", text);
        out.write()?;
    }
    Ok(if report.passed() {
        Status::Ok
    } else {
        Status::PropertyFailure
    })
}

fn cmd_demo_dp_collapse(args: &RunArgs, log: &mut dyn Write) -> Result<Status, CliError> {
    let (cfg, dir) = load(args)?;
    let demo = demo_dp_collapse(
        &cfg.game_config(),
        &cfg.sweep.dp_epsilons,
        cfg.unlearner.dp_delta,
        cfg.sweep.dp_queries,
        cfg.sweep.dp_repeats,
    )?;
    let summary = demo.render_summary();
    let _ = log.write_all(summary.as_bytes());
    let mut points: Vec<(String, f64, f64)> = Vec::new();
    for p in &demo.points {
        points.push(("oracle_accuracy".into(), p.epsilon, p.median_accuracy));
        points.push(("baseline".into(), p.epsilon, demo.baseline));
        points.push((
            "unwrapped_accuracy".into(),
            p.epsilon,
            demo.unwrapped_accuracy,
        ));
    }
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Outputs::new(dir);
    out.add("dp_collapse.csv", demo.render_table());
    out.add("plot_dp_collapse.csv", render_plot(&points));
    out.add("summary.txt", summary);
    out.write()?;
    Ok(if demo.checks().passed() {
        Status::Ok
    } else {
        Status::PropertyFailure
    })
}

fn cmd_report(dir: &Path, out_dir: Option<&Path>, log: &mut dyn Write) -> Result<Status, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io {
            path: dir.to_path_buf(),
            message: "not a directory".into(),
        });
    }
    let files = find_result_files(dir)?;
    if files.is_empty() {
        return Err(CliError::EmptyResults(dir.to_path_buf()));
    }
    let mut rows = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| CliError::Io {
            path: f.clone(),
            message: e.to_string(),
        })?;
        rows.extend(parse_rows(&text, f)?);
    }
    let merged = merge_rows(&rows)?;
    let mut out = Outputs::new(
        out_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| dir.join("report")),
    );
    out.add("aggregate.csv", render_rows(&merged));
    out.add("table_forget.csv", forget_table(&merged));
    out.add("table_sigma.csv", sigma_table(&merged));
    let _ = writeln!(
        log,
        "merged {} rows from {} files into {} configuration points",
        rows.len(),
        files.len(),
        merged.len()
    );
    out.write()?;
    Ok(Status::Ok)
}

/// Runs a parsed command line, logging human-readable progress to `log`.
pub fn run(cli: &Cli, log: &mut dyn Write) -> Result<Status, CliError> {
    let body = |log: &mut dyn Write| match &cli.command {
        Command::Game(a) => cmd_game(a, log),
        Command::SweepForget(a) => cmd_sweep_forget(a, log),
        Command::SweepSigma(a) => cmd_sweep_sigma(a, log),
        Command::VerifyPerfect {
            inject_fault,
            ridge,
            out,
        } => cmd_verify_perfect(
            SuiteOptions {
                inject_fault: *inject_fault,
                ridge: *ridge,
            },
            out.as_deref(),
            log,
        ),
        Command::DemoDpCollapse(a) => cmd_demo_dp_collapse(a, log),
        Command::Report { dir, out } => cmd_report(dir, out.as_deref(), log),
    };
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config {
                    origin: "--threads".into(),
                    message: e.to_string(),
                })?;
            let mut buf: Vec<u8> = Vec::new();
            let status = pool.install(|| body(&mut buf));
            let _ = log.write_all(&buf);
            status
        }
        None => body(log),
    }
}
