use std::fs;
use std::process::Command;

fn ads() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ads"))
}

const SMALL: &str = "
dataset = two_moons
n = 200
labels_per_class = 3
test_fraction = 0.2
hidden = 8
epochs = 3
batch_unlabeled = 32
";

#[test]
fn verify_passes() {
    let out = ads().arg("verify").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ALL PASS"));
}

#[test]
fn usage_errors_exit_2() {
    let out = ads().args(["run", "--config", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/x.cfg"));

    let out = ads().arg("bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 3\nwidth = 4\n").unwrap();
    let out = ads().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn run_sweep_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();

    let run = dir.path().join("run");
    let out = ads()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["config.echo", "metrics.csv", "histogram.csv", "checkpoint.bin"] {
        assert!(run.join(file).is_file(), "missing {file}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 4);

    let curves = ads()
        .args(["export", "--what", "curves", "--run"])
        .arg(&run)
        .output()
        .unwrap();
    assert!(curves.status.success());
    assert!(String::from_utf8_lossy(&curves.stdout).starts_with("epoch,test_error"));

    let sweep = dir.path().join("sweep");
    let out = ads()
        .args(["sweep", "--strategies", "ads,none", "--seeds", "0,1", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&sweep)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sweep.join("ads_seed1").join("metrics.csv").is_file());
    let table = ads()
        .args(["export", "--what", "table", "--run"])
        .arg(&sweep)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&table.stdout).into_owned();
    assert_eq!(text.lines().count(), 3, "{text}");

    let out = ads()
        .args(["export", "--what", "nonsense", "--run"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
