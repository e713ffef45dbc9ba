use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_unlearn-arena");

const SMALL_DATA: &str = "[game.data]\nclasses = 4\ntrain = 200\ntest = 100\npopulation = 200\n";

fn arena(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("UNLEARN_ARENA_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn knn_config(dir: &Path, trials: usize) -> PathBuf {
    write(
        dir,
        "knn.toml",
        &format!("[scheme]\nkind = \"knn\"\n[unlearner]\nmethod = \"knn-delete\"\n[game]\ntrials = {trials}\nforget_size = 10\n{SMALL_DATA}"),
    )
}

#[test]
fn malformed_config_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[game]\ntrials = -5\n");
    let out = arena(&[
        "game",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("trials"), "{}", stderr(&out));
    assert!(!dir.path().join("results.csv").exists());

    let cfg = write(dir.path(), "unknown.toml", "[game]\ntrails = 5\n");
    let out = arena(&["game", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("trails"), "{}", stderr(&out));

    let out = arena(&["game", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn incompatible_method_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "mix.toml",
        "[scheme]\nkind = \"mlp\"\n[unlearner]\nmethod = \"knn-delete\"\n",
    );
    let out = arena(&[
        "game",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("unlearner.method"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn knn_game_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = knn_config(dir.path(), 32);
    let out_dir = dir.path().join("out");
    let out = arena(&[
        "game",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["results.csv", "trials.jsonl", "summary.txt"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("#schema="));
    assert_eq!(lines.count(), 2);
    let jsonl = std::fs::read_to_string(out_dir.join("trials.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 33);
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("experiment_id").is_some());
    }
}

#[test]
fn trials_flag_and_seed_env_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = knn_config(dir.path(), 32);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(arena(&[
        "game",
        cfg.to_str().unwrap(),
        "--trials",
        "4",
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    let seeded = Command::new(BIN)
        .args([
            "game",
            cfg.to_str().unwrap(),
            "--trials",
            "4",
            "--out",
            b.to_str().unwrap(),
        ])
        .env("UNLEARN_ARENA_SEED", "9")
        .output()
        .unwrap();
    assert!(seeded.status.success());
    let ja = std::fs::read_to_string(a.join("trials.jsonl")).unwrap();
    let jb = std::fs::read_to_string(b.join("trials.jsonl")).unwrap();
    assert_eq!(ja.lines().count(), 5);
    assert_ne!(ja, jb);
}

#[test]
fn verify_perfect_exit_codes() {
    let ok = arena(&["verify-perfect"]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    let faulty = arena(&["verify-perfect", "--inject-fault"]);
    assert_eq!(faulty.status.code(), Some(2));
    let ridged = arena(&["verify-perfect", "--ridge", "0.1"]);
    assert_eq!(
        ridged.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ridged.stdout)
    );
}

fn result_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(String::from)
        .collect()
}

#[test]
fn report_merges_runs_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = knn_config(dir.path(), 64);
    let runs = dir.path().join("runs");
    for (name, seed) in [("first", "1"), ("second", "2")] {
        let out = Command::new(BIN)
            .args([
                "game",
                cfg.to_str().unwrap(),
                "--out",
                runs.join(name).to_str().unwrap(),
            ])
            .env("UNLEARN_ARENA_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let report = arena(&["report", runs.to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(0), "{}", stderr(&report));
    let merged = result_rows(&runs.join("report").join("aggregate.csv"));
    assert_eq!(merged.len(), 1);
    let header = std::fs::read_to_string(runs.join("first").join("results.csv")).unwrap();
    let columns: Vec<&str> = header.lines().nth(1).unwrap().split(',').collect();
    let trials = columns.iter().position(|c| *c == "trials").unwrap();
    let wins = columns.iter().position(|c| *c == "wins").unwrap();
    let cells: Vec<&str> = merged[0].split(',').collect();
    assert_eq!(cells[trials], "128");
    let single: Vec<u64> = ["first", "second"]
        .iter()
        .map(|n| {
            result_rows(&runs.join(n).join("results.csv"))[0]
                .split(',')
                .nth(wins)
                .unwrap()
                .parse()
                .unwrap()
        })
        .collect();
    assert_eq!(
        cells[wins].parse::<u64>().unwrap(),
        single.iter().sum::<u64>()
    );

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(
        arena(&["report", empty.to_str().unwrap()]).status.code(),
        Some(1)
    );

    let mixed = dir.path().join("mixed");
    std::fs::create_dir_all(mixed.join("old")).unwrap();
    std::fs::copy(
        runs.join("first").join("results.csv"),
        mixed.join("results.csv"),
    )
    .unwrap();
    let stale = std::fs::read_to_string(runs.join("second").join("results.csv"))
        .unwrap()
        .replacen("/v1", "/v0", 1);
    std::fs::write(mixed.join("old").join("results.csv"), stale).unwrap();
    let out = arena(&["report", mixed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema"), "{}", stderr(&out));
}

#[test]
fn help_lists_every_subcommand() {
    let out = arena(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "game",
        "sweep-forget",
        "sweep-sigma",
        "verify-perfect",
        "demo-dp-collapse",
        "report",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
