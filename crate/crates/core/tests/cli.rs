use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"
[env]
kind = "grid"
width = 5
height = 5
horizon = 5

[skill]
kind = "continuous"
dim = 2

[train]
seed = 3
epochs = 4
episodes_per_epoch = 2
grad_steps_per_epoch = 3
batch_size = 8
buffer_capacity = 64
phi_hidden = [8]

[sac]
hidden = [8]

[eval]
every = 2
n_skills = 4
"#;

fn metra(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metra"))
        .args(args)
        .env("METRA_OUTPUT_ROOT", root)
        .env("METRA_REVISION", "test")
        .current_dir(root)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn manifest_files(dir: &Path) -> Vec<String> {
    json(&dir.join("manifest.json"))["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn train_tiny(root: &Path) -> PathBuf {
    let cfg = write(root, "tiny.cfg", TINY);
    let o = metra(&["train", "--config", cfg.to_str().unwrap()], root);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    root.join("tiny-seed3")
}

#[test]
fn train_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_tiny(tmp.path());
    for f in ["config.toml", "metrics.jsonl", "manifest.json", "checkpoint/state.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert!(!run.join(".lock").exists());
    let m = json(&run.join("manifest.json"));
    assert_eq!(m["revision"], "test");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["train"]["epochs"], 4);
    assert!(humantime::parse_rfc3339(m["started_at"].as_str().unwrap()).is_ok());
    let artifacts = manifest_files(&run);
    assert!(artifacts.contains(&"metrics.jsonl".to_string()));
    assert!(artifacts.contains(&"checkpoint/params/phi.bin".to_string()));
    assert_eq!(fs::read_to_string(run.join("metrics.jsonl")).unwrap().lines().count(), 4);

    // later commands append their artifact to the same manifest exactly once
    let r = metra(&["reach", "--checkpoint", run.to_str().unwrap(), "--n-goals", "3"], tmp.path());
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = metra(&["reach", "--checkpoint", run.join("checkpoint").to_str().unwrap(), "--n-goals", "3"], tmp.path());
    assert_eq!(code(&r), 0);
    let artifacts = manifest_files(&run);
    assert_eq!(artifacts.iter().filter(|a| *a == "reach.json").count(), 1);
    assert!(artifacts.contains(&"metrics.jsonl".to_string()));
}

#[test]
fn same_seed_gives_identical_metrics_and_resume_continues_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.cfg", TINY);
    let cfg = cfg.to_str().unwrap();
    let full = tmp.path().join("full");
    let again = tmp.path().join("again");
    let split = tmp.path().join("split");
    for out in [&full, &again] {
        assert_eq!(code(&metra(&["train", "--config", cfg, "--out", out.to_str().unwrap()], tmp.path())), 0);
    }
    let a = fs::read_to_string(full.join("metrics.jsonl")).unwrap();
    assert_eq!(a, fs::read_to_string(again.join("metrics.jsonl")).unwrap());

    let s = split.to_str().unwrap();
    assert_eq!(code(&metra(&["train", "--config", cfg, "--out", s, "--epochs", "2"], tmp.path())), 0);
    let o = metra(&["train", "--config", cfg, "--out", s, "--resume"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(a, fs::read_to_string(split.join("metrics.jsonl")).unwrap());
}

#[test]
fn config_errors_exit_2_and_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let no_env = write(tmp.path(), "no_env.cfg", &TINY.replace("[env]\nkind = \"grid\"\nwidth = 5\nheight = 5\nhorizon = 5\n", ""));
    let o = metra(&["train", "--config", no_env.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("env"), "{}", stderr(&o));

    let o = metra(&["train", "--config", "does-not-exist.cfg"], tmp.path());
    assert_eq!(code(&o), 2);

    let bad = write(tmp.path(), "bad.cfg", &TINY.replace("batch_size = 8", "batch_size = 0"));
    let o = metra(&["train", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("batch_size"), "{}", stderr(&o));

    let o = metra(&["train"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn non_finite_training_exits_3_with_a_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "boom.cfg",
        &TINY.replace("phi_hidden = [8]", "phi_hidden = [8]\nphi_lr = 1e300"),
    );
    let out = tmp.path().join("boom");
    let o = metra(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
    let dump = json(&out.join("nan_dump.json"));
    assert_eq!(dump["epoch"], 0);
    assert!(dump["obs"].as_array().is_some_and(|rows| !rows.is_empty()));
    assert!(manifest_files(&out).contains(&"nan_dump.json".to_string()));
    assert!(!out.join(".lock").exists());
}

#[test]
fn a_locked_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.cfg", TINY);
    let out = tmp.path().join("busy");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".lock"), "1").unwrap();
    let o = metra(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("locked"));
    assert!(!out.join("metrics.jsonl").exists());
}

#[test]
fn missing_checkpoint_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["reach", "--checkpoint", "nowhere"],
        vec!["verify", "lipschitz", "--checkpoint", "nowhere"],
        vec!["export", "latents", "--checkpoint", "nowhere"],
    ] {
        let o = metra(&args, tmp.path());
        assert_eq!(code(&o), 2, "{args:?}");
    }
}

#[test]
fn reach_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_tiny(tmp.path());
    let r = run.to_str().unwrap();

    let o = metra(&["reach", "--checkpoint", r, "--n-goals", "0", "--out", "none.json"], tmp.path());
    assert_eq!(code(&o), 0);
    let rep = json(&tmp.path().join("none.json"));
    assert_eq!(rep["n_goals"], 0);
    assert_eq!(rep["goals"].as_array().unwrap().len(), 0);

    // the start cell of a 5x5 grid is (2, 2)
    let o = metra(&["reach", "--checkpoint", r, "--goal", "2,2", "--out", "start.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&tmp.path().join("start.json"));
    assert_eq!(rep["success_rate"], 1.0);
    assert_eq!(rep["goals"][0]["steps"], 0);

    let o = metra(&["reach", "--checkpoint", r, "--goal", "9,9"], tmp.path());
    assert_eq!(code(&o), 2);
    // files written outside a run directory get their own manifest
    let listed = manifest_files(tmp.path());
    assert!(listed.contains(&"none.json".to_string()) && listed.contains(&"start.json".to_string()));
}

#[test]
fn verify_reports_are_written_and_exit_codes_follow_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_tiny(tmp.path());
    let o = metra(&["verify", "lipschitz", "--checkpoint", run.to_str().unwrap()], tmp.path());
    let rep = json(&run.join("verify_lipschitz.json"));
    assert_eq!(code(&o), if rep["pass"].as_bool().unwrap() { 0 } else { 4 });
    assert_eq!(rep["global"]["pairs_checked"], 25 * 24 / 2);
    assert_eq!(rep["adjacent"]["pairs_checked"], 2 * 2 * 5 * 4);

    let o = metra(&["verify", "pca", "--shape", "4,0;0,1", "--d", "1", "--random-samples", "500"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&tmp.path().join("verify/verify_pca.json"));
    assert_eq!(rep["analytic_value"], 4.0);
    assert_eq!(rep["eigvals"][0], 4.0);
    assert!(rep["achieved_value"].is_null());

    let o = metra(&["verify", "pca", "--shape", "1,2;2,1", "--d", "1"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = metra(&["verify", "pca", "--shape", "1,0;0,1", "--d", "3"], tmp.path());
    assert_ne!(code(&o), 0);

    let grid = write(tmp.path(), "grid.cfg", TINY);
    let o = metra(&["verify", "embedding", "--config", grid.to_str().unwrap(), "--out", "emb.json"], tmp.path());
    assert_eq!(code(&o), 4);
    let rep = json(&tmp.path().join("emb.json"));
    assert_eq!(rep["embeddable"], false);
    assert!(rep["max_abs_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn a_corridor_embeds_and_exports_its_distances() {
    let tmp = tempfile::tempdir().unwrap();
    let corridor = write(
        tmp.path(),
        "corridor.cfg",
        &TINY.replace("width = 5\nheight = 5", "width = 3\nheight = 1"),
    );
    let c = corridor.to_str().unwrap();
    let o = metra(&["verify", "embedding", "--config", c, "--out", "emb.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&tmp.path().join("emb.json"))["embeddable"], true);

    let o = metra(&["export", "distances", "--config", c, "--out", "d.csv"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(tmp.path().join("d.csv")).unwrap(), "0,1,2\n1,0,1\n2,1,0\n");
}

#[test]
fn exports_from_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train_tiny(tmp.path());
    let r = run.to_str().unwrap();
    assert_eq!(code(&metra(&["export", "coverage", "--checkpoint", r], tmp.path())), 0);
    let cov = fs::read_to_string(run.join("coverage.csv")).unwrap();
    let lines: Vec<&str> = cov.lines().collect();
    assert_eq!(lines[0], "epoch,total_coverage,queue_coverage,policy_coverage,landmark_coverage");
    // evaluations at epochs 2 and 4
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,") && lines[2].starts_with("4,"));

    assert_eq!(code(&metra(&["export", "latents", "--checkpoint", r], tmp.path())), 0);
    let lat = fs::read_to_string(run.join("latents.csv")).unwrap();
    assert!(lat.starts_with("trajectory,skill_id,t,phi_0,phi_1\n"));
    // 4 skills, horizon 5, 6 states each
    assert_eq!(lat.lines().count(), 1 + 4 * 6);

    assert_eq!(code(&metra(&["export", "distances", "--checkpoint", r], tmp.path())), 0);
    assert_eq!(fs::read_to_string(run.join("distances.csv")).unwrap().lines().count(), 25);
    let artifacts = manifest_files(&run);
    for f in ["coverage.csv", "latents.csv", "distances.csv"] {
        assert!(artifacts.contains(&f.to_string()), "{f} not in manifest");
    }
}
