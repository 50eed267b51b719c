use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use earl::cli::checkpoint;
use earl::cli::config::RunConfig;
use earl::minirtl::Vocab;
use earl::rlcore::METRICS_HEADER;
use earl::taskgen::Corpus;

fn earl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A config small enough that every stage finishes in seconds.
fn tiny_config(dir: &Path) -> String {
    let mut cfg = RunConfig {
        seed: 3,
        out_dir: dir.join("run"),
        ..RunConfig::default()
    };
    cfg.sft.epochs = 2;
    cfg.rl.steps = 3;
    cfg.eval.n = 2;
    cfg.eval.ks = vec![1, 2];
    let path = dir.join("tiny.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_stages(dir: &Path, config: &str, stages: &[&str]) {
    for s in stages {
        let o = earl(dir, &["--config", config, s]);
        assert!(o.status.success(), "{s} failed: {}", stderr(&o));
    }
}

#[test]
fn pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    run_stages(tmp.path(), &config, &["gen-data", "sft", "train", "eval", "analyze"]);
    let run = tmp.path().join("run");
    for f in [
        "corpus.json",
        "sft.ckpt",
        "sft_loss.csv",
        "rl.ckpt",
        "metrics.csv",
        "eval.csv",
        "entropy_hist.csv",
        "entropy_hist.svg",
        "token_classes.csv",
        "top_tokens.csv",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some(METRICS_HEADER));
    assert_eq!(lines.count(), 3);
    let eval = fs::read_to_string(run.join("eval.csv")).unwrap();
    assert!(eval.starts_with("task_id,n,c,c_syn,mean_reward,pass@1,pass@2,syn@1,syn@2\n"));
    assert!(eval.lines().last().unwrap().starts_with("mean,"));
    assert!(fs::read_dir(&run)
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().starts_with("heatmap_")));
}

#[test]
fn reference_scores_one_and_garbage_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    run_stages(tmp.path(), &config, &["gen-data"]);
    let corpus = Corpus::from_json(&fs::read_to_string(tmp.path().join("run/corpus.json")).unwrap()).unwrap();
    let task = corpus.heldout().next().unwrap();
    fs::write(tmp.path().join("good.v"), &task.reference_text).unwrap();
    fs::write(tmp.path().join("bad.v"), "module endmodule ;").unwrap();

    let o = earl(tmp.path(), &["--config", &config, "score", "--task", &task.id, "--candidate", "good.v"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(b["reward"], 1.0);
    assert_eq!(b["functional_pass"], true);

    let o = earl(tmp.path(), &["--config", &config, "score", "--task", &task.id, "--candidate", "bad.v"]);
    let b: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(b["reward"], 0.0);
    assert_eq!(b["stage"], "parse-fail");

    let o = earl(tmp.path(), &["--config", &config, "score", "--task", "no-such-task", "--candidate", "good.v"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:validation:"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = earl(tmp.path(), &["--config", "does-not-exist.json", "gen-data"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error:usage:"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let o = earl(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:usage:"));

    let o = earl(tmp.path(), &["--workers", "0", "show-config"]);
    assert_eq!(o.status.code(), Some(1));

    assert!(earl(tmp.path(), &["--help"]).status.success());
}

#[test]
fn invalid_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"rl": {"rho": 1.5}}"#).unwrap();
    let o = earl(tmp.path(), &["--config", bad.to_str().unwrap(), "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error:validation:") && err.contains("rl"), "{err}");

    fs::write(&bad, r#"{"rl": {"rhoo": 0.5}}"#).unwrap();
    let o = earl(tmp.path(), &["--config", bad.to_str().unwrap(), "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rl.rhoo"), "{}", stderr(&o));
}

#[test]
fn foreign_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    run_stages(tmp.path(), &config, &["gen-data", "sft"]);
    let ckpt = tmp.path().join("run/sft.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    // magic 8 + three u32 + bag flag + four u32 puts the hash at byte 37.
    bytes[37] = if bytes[37] == b'0' { b'1' } else { b'0' };
    fs::write(tmp.path().join("foreign.ckpt"), bytes).unwrap();
    let o = earl(tmp.path(), &["--config", &config, "eval", "--checkpoint", "foreign.ckpt"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error:validation:") && err.contains("vocabulary hash"), "{err}");
}

#[test]
fn checkpoint_file_round_trips_bytewise() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    run_stages(tmp.path(), &config, &["gen-data", "sft"]);
    let first = tmp.path().join("run/sft.ckpt");
    let params = checkpoint::load(&first, Vocab::minirtl()).unwrap();
    let second = tmp.path().join("again.ckpt");
    checkpoint::save(&second, &params).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn shipped_default_config_matches_show_config() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let text = fs::read_to_string(&shipped).unwrap();
    let cfg = RunConfig::from_json(&text).unwrap();
    assert_eq!(cfg, RunConfig::default());
    let o = earl(Path::new(env!("CARGO_MANIFEST_DIR")), &["show-config"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
}
