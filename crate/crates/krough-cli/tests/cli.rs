use std::path::Path;
use std::process::Command;

fn krough(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_krough"))
        .args(args)
        .args(["--set", &format!("output_dir=\"{}\"", out.display())])
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path, cmd: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out").join(cmd).join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn show_config_round_trips_through_a_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = krough(tmp.path(), &["show-config", "--set", "pam.t_end=0.25"]);
    assert!(o.status.success());
    let path = tmp.path().join("run.toml");
    std::fs::write(&path, &o.stdout).unwrap();
    let again = krough(
        tmp.path(),
        &["show-config", "--config", path.to_str().unwrap()],
    );
    assert_eq!(o.stdout, again.stdout);
    assert!(String::from_utf8_lossy(&o.stdout).contains("t_end = 0.25"));
}

#[test]
fn young_regime_is_refused_before_computing() {
    let tmp = tempfile::tempdir().unwrap();
    let o = krough(tmp.path(), &["renorm-constants", "--set", "h=[0.55]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Young regime"));
}

#[test]
fn mollifier_certificate_passes_for_both_builtins() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ["gauss-gauss", "indicator-heat"] {
        let o = krough(
            tmp.path(),
            &[
                "verify-mollifier",
                "--set",
                &format!("mollifier=\"{kind}\""),
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(manifest(tmp.path(), "verify-mollifier")["passed"], true);
    }
}

#[test]
fn pam_runs_are_reproducible_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "pam-converge",
        "--set",
        "pam.levels=[1, 2, 3]",
        "--set",
        "pam.t_end=0.125",
    ];
    let first = krough(tmp.path(), &args);
    assert!(
        first.status.code().is_some_and(|c| c < 2),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let a = manifest(tmp.path(), "pam-converge");
    krough(tmp.path(), &args);
    let b = manifest(tmp.path(), "pam-converge");
    assert_eq!(a["files"], b["files"]);
    assert_eq!(a["config_sha256"], b["config_sha256"]);
    let csv =
        std::fs::read_to_string(tmp.path().join("out/pam-converge/pam_convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn exit_code_reflects_failed_checks() {
    let tmp = tempfile::tempdir().unwrap();
    // an impossible tolerance makes the slope check fail
    let o = krough(
        tmp.path(),
        &[
            "renorm-constants",
            "--set",
            "levels=[2, 3, 4]",
            "--set",
            "tolerances.slope=-1.0",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(manifest(tmp.path(), "renorm-constants")["passed"], false);
}
