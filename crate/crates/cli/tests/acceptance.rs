//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use unlearn_arena::distinguishers::{Direction, DistinguisherKind};
use unlearn_arena::game::{run_game, GameConfig, GameReport};
use unlearn_arena::numerics::{
    invert_spd, jeffreys_interval, kl_divergence, median, sherman_morrison_downdate, softmax,
    spearman, Matrix, RngStream,
};
use unlearn_arena::schemes::SchemeId;
use unlearn_arena::unlearners::{Method, UnlearnerConfig};
use unlearn_arena_cli::config::negligible_epsilon;
use unlearn_arena_cli::dp::demo_dp_collapse;
use unlearn_arena_cli::perfect::{run_suite, SuiteOptions};
use unlearn_arena_cli::{run, Cli};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn game(
    method: Method,
    kind: DistinguisherKind,
    scheme: SchemeId,
    forget: usize,
    trials: usize,
    seed: u64,
) -> GameReport {
    let mut cfg = GameConfig::default();
    cfg.unlearner.method = method;
    cfg.distinguisher.kind = kind;
    cfg.scheme = scheme;
    cfg.forget_size = forget;
    cfg.trials = trials;
    cfg.master_seed = seed;
    run_game(&cfg).unwrap_or_else(|e| panic!("{method}/{kind} game failed: {e}"))
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let report = run_suite(SuiteOptions::default());
    let elapsed = start.elapsed();
    let linreg = &report.cases[0];
    let knn = &report.cases[1];
    verdict(
        linreg.passed && knn.passed && within(elapsed, Duration::from_secs(5)),
        format!("{}; {}; {:.2?}", linreg.detail, knn.detail, elapsed),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (method, scheme) in [
        (Method::Ssd, SchemeId::Mlp),
        (Method::Amnesiac, SchemeId::Mlp),
        (Method::NewtonRemoval, SchemeId::Logistic),
    ] {
        let r = game(method, DistinguisherKind::ExactMatch, scheme, 30, 128, 0);
        ok &= r.summary.wins >= 127;
        parts.push(format!("{method} {}/{}", r.summary.wins, r.summary.trials));
    }
    let r = game(
        Method::BadTeacher,
        DistinguisherKind::ExactMatch,
        SchemeId::Mlp,
        30,
        128,
        0,
    );
    ok &= r.summary.abstentions == r.summary.trials;
    parts.push(format!(
        "bad-teacher abstained {}/{}",
        r.summary.abstentions, r.summary.trials
    ));
    let elapsed = start.elapsed();
    ok &= within(elapsed, Duration::from_secs(600));
    verdict(ok, format!("{}; {:.1?}", parts.join(", "), elapsed))
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut seed0 = String::new();
    for seed in 0..20 {
        let r = game(
            Method::KnnDelete,
            DistinguisherKind::Kld,
            SchemeId::Knn,
            30,
            256,
            seed,
        );
        if seed == 0 {
            seed0 = format!(
                "seed 0: {}/{} in [{:.4}, {:.4}]",
                r.summary.wins, r.summary.trials, r.summary.interval.lo, r.summary.interval.hi
            );
        }
        if !r.summary.interval.contains(0.5) {
            failures.push(seed);
        }
    }
    verdict(
        failures.len() <= 2,
        format!(
            "{seed0}; seeds excluding 0.5: {failures:?} of 20; {:.1?}",
            start.elapsed()
        ),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for method in [Method::Amnesiac, Method::BadTeacher] {
        for kind in [DistinguisherKind::Kld, DistinguisherKind::Mia] {
            let s = game(method, kind, SchemeId::Mlp, 30, 128, 0).summary;
            ok &= s.significant;
            parts.push(format!(
                "{method}/{kind} {}/{} [{:.3}, {:.3}]",
                s.wins, s.trials, s.interval.lo, s.interval.hi
            ));
        }
    }
    for method in [Method::Amnesiac, Method::BadTeacher, Method::Ssd] {
        let small = game(method, DistinguisherKind::Kld, SchemeId::Mlp, 3, 128, 0)
            .summary
            .success_rate;
        let large = game(method, DistinguisherKind::Kld, SchemeId::Mlp, 300, 128, 0)
            .summary
            .success_rate;
        ok &= large >= small - 0.05;
        parts.push(format!("{method} trend {small:.3} -> {large:.3}"));
    }
    let elapsed = start.elapsed();
    ok &= within(elapsed, Duration::from_secs(1800));
    verdict(ok, format!("{}; {:.1?}", parts.join(", "), elapsed))
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let sigmas = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
    let mut med_u = Vec::new();
    let mut controls = Vec::new();
    let mut directions = Vec::new();
    for sigma in sigmas {
        let cfg = GameConfig {
            scheme: SchemeId::Logistic,
            unlearner: UnlearnerConfig {
                newton_sigma: sigma,
                ..UnlearnerConfig::new(Method::NewtonRemoval)
            },
            trials: 16,
            ..GameConfig::default()
        };
        let r = run_game(&cfg).expect("newton game");
        med_u.push(median(&r.scores_unlearned()));
        controls.push(r.scores_control());
        directions.push(r.summary.rule.map(|x| x.direction));
    }
    let rho = spearman(&sigmas, &med_u);
    let strictly = med_u.windows(2).all(|w| w[1] > w[0]);
    let control_medians: Vec<f64> = controls.iter().map(|c| median(c)).collect();
    let (lo, hi) = control_medians
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let control_ok = hi / lo <= 1.0 + 1e-9;
    let flips = directions.first() == Some(&Some(Direction::LowerIsUnlearned))
        && directions.last() == Some(&Some(Direction::HigherIsUnlearned));
    let elapsed = start.elapsed();
    verdict(
        rho == 1.0 && strictly && control_ok && flips && within(elapsed, Duration::from_secs(600)),
        format!(
            "medians {}, spearman {rho}, control max/min {:.3e}, rule {:?} -> {:?}; {:.1?}",
            med_u
                .iter()
                .map(|m| format!("{m:.4e}"))
                .collect::<Vec<_>>()
                .join(" "),
            hi / lo,
            directions.first().copied().flatten(),
            directions.last().copied().flatten(),
            elapsed
        ),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let cfg = GameConfig::default();
    let eps = [1e2, negligible_epsilon()];
    let demo = demo_dp_collapse(&cfg, &eps, 0.0, 1000, 16).expect("dp demo");
    let high = demo.points[0].median_accuracy;
    let low = demo.points[1].median_accuracy;
    let ok = (low - demo.baseline).abs() <= 0.05
        && (high - demo.unwrapped_accuracy).abs() <= 0.02
        && within(start.elapsed(), Duration::from_secs(60));
    verdict(
        ok,
        format!(
            "negligible eps {low:.4} vs 1/C {:.4}; eps 1e2 {high:.4} vs unwrapped {:.4}; {:.1?}",
            demo.baseline,
            demo.unwrapped_accuracy,
            start.elapsed()
        ),
    )
}

/// `P(X ≤ sin²θ)` for `X ~ Beta(a, b)` by Simpson's rule in `θ`, where the
/// density becomes `2 sin^(2a−1)θ cos^(2b−1)θ` and has no endpoint singularity.
fn beta_mass(a: f64, b: f64, theta: f64) -> f64 {
    let f = |t: f64| 2.0 * t.sin().powf(2.0 * a - 1.0) * t.cos().powf(2.0 * b - 1.0);
    let n = 20_000;
    let h = theta / n as f64;
    let mut s = f(0.0) + f(theta);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn brute_force_quantile(a: f64, b: f64, p: f64) -> f64 {
    let total = beta_mass(a, b, std::f64::consts::FRAC_PI_2);
    let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if beta_mass(a, b, mid) / total < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).sin().powi(2)
}

fn criterion_7() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (s, n) in [(64u64, 128u64), (96, 128), (128, 128), (0, 0)] {
        let ci = jeffreys_interval(s, n, 0.95).expect("valid counts");
        let (a, b) = (s as f64 + 0.5, (n - s) as f64 + 0.5);
        let lo = brute_force_quantile(a, b, 0.025);
        let hi = brute_force_quantile(a, b, 0.975);
        worst = worst.max((ci.lo - lo).abs()).max((ci.hi - hi).abs());
        parts.push(format!("{s}/{n} [{:.6}, {:.6}]", ci.lo, ci.hi));
    }
    verdict(
        worst <= 1e-6,
        format!("{}; max deviation {worst:.2e}", parts.join(", ")),
    )
}

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix<f64> {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.standard_normal()).collect())
        .collect();
    Matrix::from_rows(&data).expect("rectangular")
}

fn criterion_8() -> Verdict {
    let mut rng = RngStream::new(8, 0);
    let mut worst_downdate: f64 = 0.0;
    let mut instances = 0;
    while instances < 200 {
        let n = 2 + rng.index(7);
        let x = random_matrix(3 * n, n, &mut rng);
        let gram = x.transpose().matmul(&x).expect("conformable");
        let u: Vec<f64> = (0..n).map(|_| 0.5 * rng.standard_normal()).collect();
        let a_inv = invert_spd(&gram).expect("gram is spd");
        let mut down = gram.clone();
        for i in 0..n {
            for j in 0..n {
                down.set(i, j, *down.get(i, j) - u[i] * u[j]);
            }
        }
        let Ok(direct) = invert_spd(&down) else {
            continue;
        };
        instances += 1;
        let fast = sherman_morrison_downdate(&a_inv, &u).expect("downdate");
        let scale = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| direct.get(i, j).abs())
            .fold(1.0, f64::max);
        worst_downdate = worst_downdate.max(fast.max_abs_diff(&direct) / scale);
    }
    let mut min_kl = f64::INFINITY;
    for _ in 0..10_000 {
        let c = 2 + rng.index(9);
        let p = softmax(
            &(0..c)
                .map(|_| 3.0 * rng.standard_normal())
                .collect::<Vec<_>>(),
        );
        let q = softmax(
            &(0..c)
                .map(|_| 3.0 * rng.standard_normal())
                .collect::<Vec<_>>(),
        );
        min_kl = min_kl.min(kl_divergence(&p, &q).expect("valid distributions"));
    }
    let mut worst_sum: f64 = 0.0;
    for _ in 0..10_000 {
        let c = 2 + rng.index(20);
        let scale = 10f64.powi(rng.index(7) as i32 - 2);
        let p = softmax(
            &(0..c)
                .map(|_| scale * rng.standard_normal())
                .collect::<Vec<_>>(),
        );
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    verdict(
        worst_downdate <= 1e-7 && min_kl >= 0.0 && worst_sum <= 1e-12,
        format!("downdate rel err {worst_downdate:.2e}, min KL {min_kl:.2e}, softmax sum err {worst_sum:.2e}"),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("under root").to_path_buf();
                files.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    files
}

const SMALL_DATA: &str = "[game.data]\nclasses = 4\ntrain = 200\ntest = 100\npopulation = 200\n";

fn write_configs(root: &Path) -> Vec<(&'static str, PathBuf)> {
    let configs = [
        ("game", format!("[scheme]\nepochs = 5\n[distinguisher]\nkind = \"mia\"\nshadow_count = 4\ncalibration_trials = 8\n[game]\ntrials = 12\nforget_size = 10\n{SMALL_DATA}")),
        ("sweep-forget", format!("[scheme]\nepochs = 5\n[distinguisher]\ncalibration_trials = 8\n[game]\ntrials = 8\n{SMALL_DATA}[sweep]\nmethods = [\"amnesiac\", \"ssd\"]\nforget_sizes = [3, 30]\n")),
        ("sweep-sigma", format!("[scheme]\nkind = \"logistic\"\nepochs = 5\n[unlearner]\nmethod = \"newton-removal\"\n[distinguisher]\ncalibration_trials = 8\n[game]\ntrials = 8\n{SMALL_DATA}[sweep]\nsigmas = [1e-3, 1e-1]\n")),
        ("demo-dp-collapse", format!("[scheme]\nepochs = 5\n{SMALL_DATA}[sweep]\ndp_repeats = 4\ndp_queries = 200\n")),
    ];
    configs
        .into_iter()
        .map(|(cmd, text)| {
            let path = root.join(format!("{cmd}.toml"));
            std::fs::write(&path, text).expect("config written");
            (cmd, path)
        })
        .collect()
}

/// Runs every command into `out`; returns captured stdout per command.
fn run_commands(
    configs: &[(&str, PathBuf)],
    out: &Path,
    threads: usize,
) -> BTreeMap<String, Vec<u8>> {
    let mut logs = BTreeMap::new();
    let t = threads.to_string();
    let invoke = |args: Vec<String>, logs: &mut BTreeMap<String, Vec<u8>>| {
        let cli = Cli::try_parse_from(args.iter()).expect("valid arguments");
        let mut buf = Vec::new();
        let status = run(&cli, &mut buf).unwrap_or_else(|e| panic!("{args:?} failed: {e}"));
        buf.extend_from_slice(format!("exit {}\n", status.exit_code()).as_bytes());
        logs.insert(args[3].clone(), buf);
    };
    for (cmd, path) in configs {
        let dir = out.join(cmd);
        invoke(
            [
                "unlearn-arena",
                "--threads",
                &t,
                cmd,
                path.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ]
            .map(String::from)
            .to_vec(),
            &mut logs,
        );
    }
    let perfect = out.join("verify-perfect");
    invoke(
        [
            "unlearn-arena",
            "--threads",
            &t,
            "verify-perfect",
            "--out",
            perfect.to_str().unwrap(),
        ]
        .map(String::from)
        .to_vec(),
        &mut logs,
    );
    invoke(
        [
            "unlearn-arena",
            "--threads",
            &t,
            "report",
            out.to_str().unwrap(),
            "--out",
            out.join("report").to_str().unwrap(),
        ]
        .map(String::from)
        .to_vec(),
        &mut logs,
    );
    logs
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let root = tempfile::tempdir().expect("tempdir");
    let configs = write_configs(root.path());
    let runs: Vec<(usize, PathBuf)> = [(1, "serial-a"), (1, "serial-b"), (4, "parallel")]
        .into_iter()
        .map(|(t, name)| (t, root.path().join(name)))
        .collect();
    let results: Vec<_> = runs
        .iter()
        .map(|(threads, dir)| (run_commands(&configs, dir, *threads), snapshot(dir)))
        .collect();
    let reference = &results[0];
    let mut mismatches = Vec::new();
    for (i, (logs, files)) in results.iter().enumerate().skip(1) {
        if logs != &reference.0 {
            mismatches.push(format!("stdout differs in run {i}"));
        }
        for (path, bytes) in &reference.1 {
            if files.get(path) != Some(bytes) {
                mismatches.push(format!("{} differs in run {i}", path.display()));
            }
        }
        if files.len() != reference.1.len() {
            mismatches.push(format!("file set differs in run {i}"));
        }
    }
    verdict(
        mismatches.is_empty() && reference.1.len() >= 15,
        format!(
            "{} files per run from 6 commands, serial x2 and 4 threads; {}; {:.1?}",
            reference.1.len(),
            if mismatches.is_empty() {
                "all byte-identical".to_string()
            } else {
                mismatches.join(", ")
            },
            start.elapsed()
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("perfect-unlearning oracle equivalence", criterion_1),
        ("replay distinguisher", criterion_2),
        ("k-nn null game", criterion_3),
        ("heuristic unlearners are distinguishable", criterion_4),
        ("sigma sweep shape", criterion_5),
        ("dp utility collapse", criterion_6),
        ("jeffreys interval oracle", criterion_7),
        ("numerics property suite", criterion_8),
        ("cli determinism", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let v = check();
        println!(
            "{} criterion {n} ({name}): {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
