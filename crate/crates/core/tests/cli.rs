use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn groundscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundscan"))
        .args(args)
        .env_remove("OPENROUTER_API_KEY")
        .output()
        .unwrap()
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/fixtures/help/{name}.txt"));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn help_matches_golden_files() {
    for (args, name) in [
        (vec!["--help"], "main"),
        (vec!["run", "--help"], "run"),
        (vec!["sweep", "--help"], "sweep"),
        (vec!["ablate", "--help"], "ablate"),
        (vec!["simulate", "--help"], "simulate"),
        (vec!["report", "--help"], "report"),
        (vec!["viz", "--help"], "viz"),
    ] {
        let out = groundscan(&args);
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), golden(name), "{name}");
    }
}

#[test]
fn run_help_lists_every_documented_flag() {
    let help = golden("run");
    for flag in [
        "--config", "--dataset", "--out", "--mode", "--seed", "--top-k", "--threshold", "--parallelism", "--subset",
        "--ablation",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = groundscan(&["simulate", "--seed", "7", "--tasks", "200", "--out", dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (read_all(&a), read_all(&b));
    assert!(fa.iter().any(|(n, _)| n == "report.md"));
    assert!(fa.iter().any(|(n, _)| n == "report.csv"));
    assert_eq!(fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs");
    }
}

#[test]
fn live_mode_without_a_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = groundscan(&["run", "--mode", "live", "--tasks", "2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("OPENROUTER_API_KEY"));
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[pipeline]\ntop_k = 0\n").unwrap();
    let out = groundscan(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = groundscan(&["run", "--top-k", "10", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn top_k_sweep_has_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = groundscan(&[
        "sweep", "--axis", "top_k", "--values", "3,5,7,9", "--tasks", "20", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    let md = std::fs::read_to_string(tmp.path().join("sweep.md")).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).skip(2).collect();
    assert_eq!(rows.len(), 4, "{md}");
}

#[test]
fn outputs_stay_inside_the_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let before = read_all(tmp.path()).len();
    assert_eq!(before, 0);
    for args in [
        vec!["ablate", "--tasks", "12"],
        vec!["viz", "--tasks", "12", "--task", "synth-0-0003"],
        vec!["run", "--tasks", "12"],
    ] {
        let mut args = args.clone();
        args.extend(["--out", out_dir.to_str().unwrap()]);
        let out = groundscan(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for (name, _) in read_all(tmp.path()) {
        assert!(name.starts_with("out"), "{name}");
    }
    assert!(out_dir.join("ablation.md").exists());
}

#[test]
fn report_merges_csv_files() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert_eq!(groundscan(&["run", "--tasks", "12", "--out", run_dir.to_str().unwrap()]).status.code(), Some(0));
    let merged = tmp.path().join("merged");
    let csv = run_dir.join("report.csv");
    let out = groundscan(&["report", csv.to_str().unwrap(), csv.to_str().unwrap(), "--out", merged.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let md = String::from_utf8(out.stdout).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| full")).count(), 2, "{md}");
}

#[test]
fn missing_dataset_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = groundscan(&["run", "--dataset", "/nonexistent/tasks.jsonl", "--out", tmp.path().to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}
