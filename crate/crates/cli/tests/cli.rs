//! Runs the `dolly` binary end to end and checks exit codes and artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn dolly(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dolly"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn dolly")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn record(dir: &Path, name: &str, diversity: &str, count: &str) {
    let o = dolly(dir, &["record", "--task", "base", "--out", name, "--count", count, "--diversity", diversity]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dolly(dir.path(), &["--help"])), 0);
    assert_eq!(code(&dolly(dir.path(), &["frobnicate"])), 1);
    let o = dolly(dir.path(), &["train", "--algo", "gail", "--task", "base"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--demos"));
    assert_eq!(code(&dolly(dir.path(), &["train", "--algo", "ppo", "--task", "sideways"])), 1);
    assert_eq!(code(&dolly(dir.path(), &["verify", "--inject", "everything"])), 1);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"ppo": {"gamma": 1.5}}"#).unwrap();
    let o = dolly(dir.path(), &["config", "--config", "bad.json"]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    let o = dolly(dir.path(), &["config", "--config", "missing.json"]);
    assert_eq!(code(&o), 2);
    let o = dolly(dir.path(), &["config", "--profile", "paper"]);
    assert_eq!(code(&o), 0);
    let cfg: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg["ppo"]["total_timesteps"], 1_000_000);
}

#[test]
fn record_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    record(dir.path(), "d.jsonl", "low", "2");
    let o = dolly(dir.path(), &["record", "--task", "base", "--out", "d.jsonl", "--count", "2"]);
    assert_eq!(code(&o), 1);
    let o = dolly(dir.path(), &["record", "--task", "base", "--out", "d.jsonl", "--count", "2", "--force"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn train_writes_one_artifact_set_per_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    record(dir.path(), "demos.jsonl", "high", "5");
    for out in ["a", "b"] {
        let o = dolly(
            dir.path(),
            &["train", "--algo", "gail", "--task", "base", "--demos", "demos.jsonl", "--seeds", "2", "--timesteps", "1024", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).contains("mean over 2 seeds"));
    }
    for seed in 0..2 {
        for ext in ["curve.csv", "ckpt.json", "eval.json"] {
            let name = format!("gail-base-seed{seed}.{ext}");
            let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
    let curve = std::fs::read_to_string(dir.path().join("a/gail-base-seed0.curve.csv")).unwrap();
    let header: serde_json::Value = serde_json::from_str(curve.lines().next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["kind"], "curve");
    assert_eq!(header["config"]["command"]["algo"], "gail");
    assert_eq!(std::fs::read_dir(dir.path().join("a")).unwrap().count(), 6);
}

#[test]
fn train_rejects_demos_missing_the_requested_diversity() {
    let dir = tempfile::tempdir().unwrap();
    record(dir.path(), "low.jsonl", "low", "2");
    let o = dolly(
        dir.path(),
        &["train", "--algo", "gail", "--task", "base", "--demos", "low.jsonl", "--diversity", "high", "--seeds", "1", "--timesteps", "512"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("diversity"));
    let o = dolly(
        dir.path(),
        &["train", "--algo", "gail", "--task", "full", "--demos", "low.jsonl", "--seeds", "1", "--timesteps", "512"],
    );
    assert_eq!(code(&o), 2, "task mismatch must be rejected");
}

#[test]
fn eval_report_and_empty_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = dolly(dir.path(), &["train", "--algo", "ppo", "--task", "base", "--seeds", "1", "--timesteps", "1024", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ck = "run/ppo-base-seed0.ckpt.json";

    let o = dolly(dir.path(), &["eval", "--checkpoint", ck, "--starts", "left,centre,right", "--episodes", "3", "--twin", "--out", "t.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("18 trials"));

    let o = dolly(dir.path(), &["report", "--trials", "t.jsonl", "--baseline", "t.jsonl", "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("ppo-base-seed0"));
    let csv = std::fs::read_to_string(dir.path().join("rep.csv")).unwrap();
    assert!(csv.starts_with("# {"));
    let md = std::fs::read_to_string(dir.path().join("rep.md")).unwrap();
    assert!(md.starts_with("<!-- {"));

    let o = dolly(dir.path(), &["eval", "--checkpoint", ck, "--episodes", "0", "--out", "empty.jsonl"]);
    assert_eq!(code(&o), 0);
    let o = dolly(dir.path(), &["report", "--trials", "empty.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no data"));

    let o = dolly(dir.path(), &["eval", "--checkpoint", ck, "--starts", "nowhere"]);
    assert_eq!(code(&o), 1);
    let o = dolly(dir.path(), &["eval", "--checkpoint", "missing.ckpt.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    record(dir.path(), "d.jsonl", "low", "2");
    let o = dolly(dir.path(), &["replay", "--trajectory", "d.jsonl", "--out", "overlay.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let overlay = std::fs::read_to_string(dir.path().join("overlay.csv")).unwrap();
    assert!(overlay.starts_with("trajectory,step,"));

    let text = std::fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut traj: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    let a = &mut traj["transitions"][3]["action"][0];
    *a = serde_json::json!(-a.as_f64().unwrap());
    lines[1] = serde_json::to_string(&traj).unwrap();
    std::fs::write(dir.path().join("t.jsonl"), lines.join("\n") + "\n").unwrap();

    let o = dolly(dir.path(), &["replay", "--trajectory", "t.jsonl", "--index", "0"]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    assert!(stdout(&o).contains("diverge"));
    let o = dolly(dir.path(), &["replay", "--trajectory", "d.jsonl", "--index", "7"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_names_the_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let o = dolly(dir.path(), &["verify"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for fault in ["gradient", "gae", "projection", "srcc", "dataset"] {
        let o = dolly(dir.path(), &["verify", "--inject", fault]);
        assert_eq!(code(&o), 2, "{fault}");
        assert!(stderr(&o).contains(fault), "{fault}: {}", stderr(&o));
    }
}

#[test]
fn aggregate_combines_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = dolly(dir.path(), &["train", "--algo", "ppo", "--task", "base", "--seeds", "2", "--timesteps", "2048", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    record(dir.path(), "d.jsonl", "low", "2");
    let o = dolly(
        dir.path(),
        &["aggregate", "--curves", "run/ppo-base-seed0.curve.csv", "run/ppo-base-seed1.curve.csv", "--expert", "d.jsonl", "--out", "agg.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    let row = text.lines().find(|l| !l.starts_with('#') && !l.starts_with("step")).unwrap();
    assert_eq!(row.split(',').nth(3), Some("2"));
}
