use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn socnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socnav"))
        .args(args)
        .env_remove("HCSG_INTERPRETER_URL")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("socnav-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn entries(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let (a, b) = (scratch("gen-a"), scratch("gen-b"));
    for dir in [&a, &b] {
        let o = socnav(&["gen", "--split", "unseen", "--n", "4", "--seed", "3", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (fa, fb) = (entries(&a), entries(&b));
    assert_eq!(fa.len(), 1);
    assert_eq!(fa[0].file_name(), fb[0].file_name());
    assert_eq!(std::fs::read(&fa[0]).unwrap(), std::fs::read(&fb[0]).unwrap());
    let text = std::fs::read_to_string(&fa[0]).unwrap();
    assert!(text.contains("config_hash"));
}

#[test]
fn gradcheck_passes() {
    let o = socnav(&["gradcheck", "--seed", "7", "--probes", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_is_a_config_error() {
    let dir = scratch("missing");
    let ck = dir.join("does-not-exist");
    let o = socnav(&["eval", "--checkpoint", ck.to_str().unwrap(), "--n", "2", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does-not-exist"), "{}", stderr(&o));
}

#[test]
fn help_and_bad_flags() {
    for sub in ["gen", "train", "eval", "ablate", "gradcheck", "replay"] {
        let o = socnav(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
    }
    assert_eq!(socnav(&["gen", "--bogus"]).status.code(), Some(1));
    assert_eq!(socnav(&["gen", "--split", "nowhere"]).status.code(), Some(1));
    assert_eq!(socnav(&["train", "--toggle", "rgb-only", "--toggle", "depth-only", "--n", "1"]).status.code(), Some(1));
}

#[test]
fn replay_writes_svg_and_log() {
    let dir = scratch("replay");
    let o = socnav(&["replay", "--split", "seen", "--seed", "2", "--episode", "1", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = entries(&dir);
    let svg = files.iter().find(|p| p.extension().is_some_and(|e| e == "svg")).expect("svg written");
    let json = files.iter().find(|p| p.extension().is_some_and(|e| e == "json")).expect("json written");
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
    let log: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert!(log["hash"].is_string(), "{log}");
}

#[test]
fn train_then_eval() {
    let dir = scratch("train");
    let out = dir.to_str().unwrap();
    let o = socnav(&["train", "--n", "3", "--iterations", "2", "--seed", "1", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = entries(&dir).into_iter().find(|p| p.is_dir()).expect("train directory");
    assert!(run.join("curves.csv").is_file());
    let curves = std::fs::read_to_string(run.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().filter(|l| !l.starts_with('#')).count(), 3, "{curves}");

    let eval_out = dir.join("eval");
    std::fs::create_dir_all(&eval_out).unwrap();
    let o = socnav(&["eval", "--checkpoint", run.to_str().unwrap(), "--n", "3", "--out", eval_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval_dir = entries(&eval_out).into_iter().next().expect("eval directory");
    let csv = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    let logs = std::fs::read_to_string(eval_dir.join("logs.jsonl")).unwrap();
    assert_eq!(logs.lines().count(), 4);
}
