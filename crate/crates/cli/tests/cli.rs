use std::path::Path;
use std::process::{Command, Output};

fn seatrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seatrack"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn seatrack")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = seatrack(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["gen", "sample", "train", "track", "eval", "sweep", "report", "serve"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(seatrack(dir.path(), &["track", "--help"]).status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = seatrack(dir.path(), &["trak"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("track"), "{}", stderr(&o));
}

#[test]
fn missing_input_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = seatrack(dir.path(), &["eval", "--gt", "missing_gt.json", "--tracks", "t.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing_gt.json"));

    let o = seatrack(
        dir.path(),
        &["track", "--manifest", "nowhere/manifest.json", "--checkpoint", "m.ckpt", "--out", "o.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/manifest.json"));
}

#[test]
fn malformed_config_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"lambda\": 2.0}").unwrap();
    let o = seatrack(dir.path(), &["gen", "--preset", "static", "--out", "seq", "--frames", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = seatrack(
        dir.path(),
        &["track", "--manifest", "seq/manifest.json", "--checkpoint", "none.ckpt", "--out", "o.json", "--config", "bad.json"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unknown_preset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = seatrack(dir.path(), &["gen", "--preset", "volcano", "--out", "seq"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| {
        let o = seatrack(d, args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        String::from_utf8_lossy(&o.stdout).into_owned()
    };
    run(&["gen", "--preset", "drift", "--out", "seq", "--frames", "20"]);
    run(&["gen", "--preset", "drift", "--out", "train", "--frames", "20", "--seed", "7"]);
    run(&["sample", "--manifest", "train/manifest.json", "--out", "data/t.bin", "--resolution", "16"]);
    assert!(d.join("data/t.provenance.json").is_file());
    std::fs::write(d.join("net.json"), r#"{"net": {"architecture": "FC_ONLY", "patch_resolution": 16, "conv1_channels": 2, "conv2_channels": 2, "hidden_units": 16, "embedding_dim": 8, "margin": 1.0}}"#).unwrap();
    run(&["train", "--triplets", "data/t.bin", "--out", "m.ckpt", "--epochs", "1", "--config", "net.json"]);
    assert!(d.join("m.log.csv").is_file());
    let out = run(&["track", "--manifest", "seq/manifest.json", "--checkpoint", "m.ckpt", "--out", "res/tracks.json"]);
    assert!(out.contains("mean step time"));
    assert!(d.join("res/tracks.timings.csv").is_file());
    let out = run(&["eval", "--manifest", "seq/manifest.json", "--tracks", "res/tracks.json", "--out", "res/mota.json"]);
    assert!(out.starts_with("MOTA"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("res/mota.json")).unwrap()).unwrap();
    let mota = report["mota"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mota));

    // Training data at the wrong resolution is rejected before training.
    run(&["sample", "--manifest", "train/manifest.json", "--out", "t24.bin"]);
    let o = seatrack(d, &["train", "--triplets", "t24.bin", "--out", "x.ckpt", "--config", "net.json"]);
    assert_eq!(o.status.code(), Some(1));
}
