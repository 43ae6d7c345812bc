use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokenmetric"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .parse()
        .unwrap()
}

fn synth_tokens(dir: &Path, name: &str, seed: &str) {
    ok(dir, &["--seed", seed, "synth", "tokens", "--n", "80", "--codebook", "128", "--grid", "4x8", "--out", name]);
}

#[test]
fn chd_of_a_dataset_against_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tokens(tmp.path(), "a.chtk", "1");
    for distance in ["hellinger", "kl", "cosine", "emd1d"] {
        let out = ok(tmp.path(), &["chd", "--real", "a.chtk", "--gen", "a.chtk", "--distance", distance]);
        assert!(value(&out, "chd").abs() < 1e-12, "{distance}: {out}");
    }
}

#[test]
fn corrupted_tokens_move_chd_away() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tokens(tmp.path(), "a.chtk", "1");
    ok(tmp.path(), &["corrupt", "--in", "a.chtk", "--p", "0.05", "--out", "mild.chtk"]);
    ok(tmp.path(), &["corrupt", "--in", "a.chtk", "--p", "0.3", "--out", "harsh.chtk"]);
    let mild = value(&ok(tmp.path(), &["chd", "--real", "a.chtk", "--gen", "mild.chtk"]), "chd");
    let harsh = value(&ok(tmp.path(), &["chd", "--real", "a.chtk", "--gen", "harsh.chtk"]), "chd");
    assert!(0.0 < mild && mild < harsh, "{mild} {harsh}");
}

#[test]
fn correlate_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let table: String = (0..30).map(|i| format!("{i} {}\n", (i * 7 % 11) as f64)).collect();
    std::fs::write(tmp.path().join("s.txt"), table).unwrap();
    let out = ok(tmp.path(), &["correlate", "--metric", "s.txt", "--human", "s.txt"]);
    assert!((value(&out, "spearman") - 1.0).abs() < 1e-12, "{out}");
    assert_eq!(value(&out, "pairwise_accuracy"), 1.0);
    let out = ok(tmp.path(), &["correlate", "--metric", "s.txt", "--human", "s.txt", "--direction", "lower"]);
    assert_eq!(value(&out, "pairwise_accuracy"), 0.0, "{out}");
}

#[test]
fn tokenize_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "images", "--n", "5", "--width", "32", "--height", "16", "--out", "imgs"]);
    ok(tmp.path(), &["tokenize", "--in", "imgs", "--grid", "4x8", "--codebook", "64", "--out", "a.chtk"]);
    ok(tmp.path(), &["--threads", "3", "tokenize", "--in", "imgs", "--grid", "4x8", "--codebook", "64", "--out", "b.chtk"]);
    let a = std::fs::read(tmp.path().join("a.chtk")).unwrap();
    assert_eq!(a, std::fs::read(tmp.path().join("b.chtk")).unwrap());
    assert!(tmp.path().join("a.chtk.manifest.json").exists());
}

#[test]
fn text_and_binary_inputs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tokens(tmp.path(), "a.chtk", "1");
    synth_tokens(tmp.path(), "a.txt", "1");
    synth_tokens(tmp.path(), "b.chtk", "2");
    let bin = ok(tmp.path(), &["chd", "--real", "a.chtk", "--gen", "b.chtk"]);
    let txt = ok(tmp.path(), &["chd", "--real", "a.txt", "--gen", "b.chtk"]);
    assert_eq!(bin, txt);
}

#[test]
fn json_output_parses() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tokens(tmp.path(), "a.chtk", "1");
    let out = ok(tmp.path(), &["--json", "tokenstats", "--in", "a.chtk", "--top", "3"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["sequences"], 80);
    assert!(v["entropy"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tokens(tmp.path(), "a.chtk", "1");
    let code = |args: &[&str]| run(tmp.path(), args).status.code().unwrap();
    assert_eq!(code(&["chd", "--real", "missing.chtk", "--gen", "a.chtk"]), 3);
    assert_eq!(code(&["sweep", "--real", "a.chtk", "--gen", "a.chtk", "--sizes", "500"]), 2);
    assert_eq!(code(&["corrupt", "--in", "a.chtk", "--p", "1.5", "--out", "x.chtk"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    std::fs::write(tmp.path().join("junk.chtk"), b"CHTK garbage").unwrap();
    assert_eq!(code(&["tokenstats", "--in", "junk.chtk"]), 3);

    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = run(tmp.path(), &["tokenize", "--in", "empty", "--grid", "4x4", "--codebook", "16", "--out", "e.chtk"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no inputs"));
}

#[test]
fn replay_rejects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--seed", "3", "synth", "tokens", "--n", "20", "--codebook", "64", "--grid", "4x4", "--out", "a.chtk"]);
    ok(tmp.path(), &["corrupt", "--in", "a.chtk", "--p", "0.1", "--out", "b.chtk"]);
    // A damaged output is regenerated and checked against the recorded digest.
    std::fs::write(tmp.path().join("b.chtk"), b"stale").unwrap();
    ok(tmp.path(), &["replay", "b.chtk.manifest.json"]);
    let mut bytes = std::fs::read(tmp.path().join("a.chtk")).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(tmp.path().join("a.chtk"), bytes).unwrap();
    let out = run(tmp.path(), &["replay", "b.chtk.manifest.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed since the recorded run"));

    let path = tmp.path().join("a.chtk.manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    manifest["outputs"][0]["sha256"] = "0".repeat(64).into();
    std::fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
    let out = run(tmp.path(), &["replay", "a.chtk.manifest.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn clean_sequences_score_higher_than_corrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "4", "synth", "tokens", "--n", "400", "--codebook", "64", "--grid", "4x4", "--out", "train.chtk"]);
    ok(d, &["--seed", "5", "cmms", "train", "--tokens", "train.chtk", "--out", "m.chmm", "--epochs", "6"]);
    ok(d, &["--seed", "6", "synth", "tokens", "--n", "60", "--codebook", "64", "--grid", "4x4", "--out", "held.chtk"]);
    ok(d, &["--seed", "7", "corrupt", "--in", "held.chtk", "--p", "0.3", "--out", "bad.chtk"]);
    let clean = value(&ok(d, &["cmms", "score", "--model", "m.chmm", "--tokens", "held.chtk", "--out", "c.txt"]), "mean");
    let bad = value(&ok(d, &["cmms", "score", "--model", "m.chmm", "--tokens", "bad.chtk", "--out", "b.txt"]), "mean");
    assert!(clean > bad, "clean {clean} vs corrupted {bad}");
}
