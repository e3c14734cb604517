use std::path::{Path, PathBuf};
use std::process::Command;

use groundplan_cli::commands::{AblateArgs, CommonArgs, DataArgs, EvaluateArgs, GenerateArgs, ModeChoice};
use groundplan_cli::{ablate, evaluate, generate};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn watch_tv(out: &Path, seed: Option<u64>) -> GenerateArgs {
    GenerateArgs {
        task: "watch tv".into(),
        env: fixtures().join("scenes/living_room_b.json"),
        examples: fixtures().join("examples.jsonl"),
        out: out.to_path_buf(),
        common: CommonArgs {
            seed,
            ..CommonArgs::default()
        },
    }
}

#[test]
fn generate_matches_golden_plan() {
    let dir = tempfile::tempdir().unwrap();
    generate(&watch_tv(dir.path(), None)).unwrap();
    let plan = std::fs::read_to_string(dir.path().join("plan.txt")).unwrap();
    let golden = std::fs::read_to_string(fixtures().join("golden/watch_tv.plan")).unwrap();
    assert_eq!(plan, golden);
    let lines: Vec<&str> = plan.lines().skip(1).collect();
    assert!(lines[0].starts_with("[Walk]"));
    assert!(lines.iter().any(|l| l.starts_with("[SwitchOn] <television> (")));

    let session: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("session.json")).unwrap()).unwrap();
    assert_eq!(session["example_task"], "watch tv");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate(&watch_tv(&a, Some(11))).unwrap();
    generate(&watch_tv(&b, Some(11))).unwrap();
    for file in ["plan.txt", "session.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_groundplan");
    let status = Command::new(bin)
        .args(["generate", "--task", "watch tv", "--env", "/no/such/env.json", "--examples"])
        .arg(fixtures().join("examples.jsonl"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("/no/such/env.json"));

    let remote = dir.path().join("remote.toml");
    std::fs::write(&remote, "[backend]\nkind = \"remote\"\nbase_url = \"http://127.0.0.1:9\"\nretries = 0\ntimeout_secs = 2\n").unwrap();
    let status = Command::new(bin)
        .args(["generate", "--task", "watch tv", "--env"])
        .arg(fixtures().join("scenes/living_room_b.json"))
        .arg("--examples")
        .arg(fixtures().join("examples.jsonl"))
        .arg("--config")
        .arg(&remote)
        .arg("--out")
        .arg(dir.path())
        .env_remove("GROUNDPLAN_BASE_URL")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3), "{}", String::from_utf8_lossy(&status.stderr));

    let ok = Command::new(bin)
        .args(["generate", "--task", "watch tv", "--env"])
        .arg(fixtures().join("scenes/living_room_b.json"))
        .arg("--examples")
        .arg(fixtures().join("examples.jsonl"))
        .args(["--set", "k=4", "--out"])
        .arg(dir.path().join("ok"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin)
        .args(["evaluate", "--set", "bogus=1", "--out"])
        .arg(dir.path().join("bad"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

fn evaluate_args(out: &Path, runs: usize, mode: ModeChoice) -> EvaluateArgs {
    EvaluateArgs {
        data: DataArgs {
            data: fixtures(),
            runs,
            subruns: 3,
        },
        dataset_split: "test".into(),
        mode,
        out: out.to_path_buf(),
        common: CommonArgs::default(),
    }
}

#[test]
fn single_run_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let table = evaluate(&evaluate_args(dir.path(), 1, ModeChoice::Both)).unwrap();
    assert!(table.contains("Baseline") && table.contains("Ours"), "{table}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for mode in report["modes"].as_array().unwrap() {
        for (_, v) in mode["summary"]["std"].as_object().unwrap() {
            assert_eq!(v.as_f64(), Some(0.0));
        }
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("table.txt")).unwrap(), table);
}

#[test]
fn five_runs_stay_in_range() {
    let dir = tempfile::tempdir().unwrap();
    evaluate(&evaluate_args(dir.path(), 5, ModeChoice::Ours)).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let modes = report["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 1);
    let mean = &modes[0]["summary"]["mean"];
    let get = |k: &str| mean[k].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&get("executability")));
    assert!((0.0..=1.0).contains(&get("lcs")));
    assert!((0.0..=2.0).contains(&get("final_correctness")));
    assert_eq!(modes[0]["runs"].as_array().unwrap().len(), 5);
    // 12 tasks, one record each, five runs
    assert_eq!(modes[0]["records"].as_array().unwrap().len(), 60);
}

#[test]
fn sweep_file_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    std::fs::write(&grid, "[[arm]]\nname = \"no scene\"\nw_s = 0\n\n[grid]\nn_e = [1, 10]\n").unwrap();
    let csv = ablate(&AblateArgs {
        data: DataArgs {
            data: fixtures(),
            runs: 1,
            subruns: 1,
        },
        dataset_split: "validation".into(),
        sweep: Some(grid),
        preset: None,
        out: dir.path().join("out"),
        common: CommonArgs::default(),
    })
    .unwrap();
    let points: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(points, ["no scene", "n_e=1", "n_e=10"]);
}
