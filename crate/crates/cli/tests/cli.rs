use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use telelink::experiment::TeleportReport;

const LOCAL: &str = include_str!("../../core/scenarios/local.toml");

fn telelink(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telelink"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn only_subdir(dir: &Path) -> PathBuf {
    let entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries.into_iter().next().unwrap()
}

#[test]
fn validate_prints_normalized_config() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["local", "metro30km", "metro30km_traffic"] {
        let out = telelink(&["validate", name], tmp.path());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("width_ps = 64"));
    }
}

#[test]
fn invalid_config_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(
        &path,
        LOCAL.replace("atten_db_per_km = 0.34", "atten_db_per_km = -0.34"),
    )
    .unwrap();
    let out = telelink(&["validate", path.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("fiber.atten_db_per_km"),
        "{}",
        stderr(&out)
    );

    let out = telelink(&["run", "no-such-scenario"], tmp.path());
    assert_eq!(code(&out), 1);
    let out = telelink(&["frobnicate"], tmp.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn run_writes_report_schema_and_tags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = telelink(
        &[
            "run",
            "local",
            "--fast",
            "--seed",
            "11",
            "--out-dir",
            "out",
            "--tag-dump",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = only_subdir(&tmp.path().join("out"));
    let name = dir.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("local_seed11_"), "{name}");

    let report =
        TeleportReport::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report.seed, 11);
    assert_eq!(report.acquisitions.len(), 18);
    assert!(report.metadata.is_some());
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.schema.json")).unwrap())
            .unwrap();
    assert!(schema["required"].is_array());
    assert_eq!(std::fs::read_dir(dir.join("tags")).unwrap().count(), 18);

    let out = telelink(
        &[
            "export",
            dir.join("report.json").to_str().unwrap(),
            "--out-dir",
            "fig",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(tmp.path().join("fig/fidelity.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "state,local,local_sigma,classical_bound");
    assert_eq!(rows.len(), 5);
    assert!(rows[4].starts_with("average,"));
}

#[test]
fn check_mode_reports_band_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("strict.toml");
    std::fs::write(
        &path,
        LOCAL.replace(
            "average_fidelity = [0.879, 0.967]",
            "average_fidelity = [0.0, 0.05]",
        ),
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let out = telelink(&["run", p, "--fast", "--out-dir", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = telelink(
        &["run", p, "--fast", "--out-dir", "out", "--check"],
        tmp.path(),
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn hom_subcommand_writes_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let out = telelink(
        &["hom", "metro30km", "--fast", "--out-dir", "out", "--check"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = only_subdir(&tmp.path().join("out"));
    let csv = std::fs::read_to_string(dir.join("hom.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
}

#[test]
fn runtime_errors_and_oracles() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    let out = telelink(&["export", "broken.json"], tmp.path());
    assert_eq!(code(&out), 2);

    let out = telelink(&["oracle", "all", "--seed", "4"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    let out = telelink(&["oracle", "nonsense"], tmp.path());
    assert_eq!(code(&out), 1);
}
