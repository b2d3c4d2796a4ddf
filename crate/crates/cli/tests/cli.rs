use std::path::Path;
use std::process::Command;

use dualrail::analysis::PostselectionPolicy;
use dualrail_cli::{execute, report_records, CliError, ExperimentConfig, RunOptions};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualrail"))
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("golden")
            .join(format!("{name}.toml")),
    )
    .unwrap()
}

#[test]
fn missing_device_exits_with_user_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 3\n[experiment]\ntype = \"budget_report\"\n").unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("device"), "{err}");
}

#[test]
fn run_and_report_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("budget.toml");
    std::fs::write(&cfg, golden("budget_report")).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("metric\tvalue\tsigma\n") && stdout.contains("johnson_t1_ms"));
    let records = dir.path().join("out/budget_report.records.jsonl");
    let rep = bin().arg("report").arg(&records).output().unwrap();
    assert!(rep.status.success());
    assert_eq!(String::from_utf8_lossy(&rep.stdout), stdout);
}

#[test]
fn presets_and_schema_verbs() {
    let out = bin().args(["presets", "list"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("paper-device"));
    let out = bin().args(["schema", "print"]).output().unwrap();
    assert!(out.status.success());
    let schema: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(schema.to_string().contains("deny") || schema["properties"]["seed"].is_object());
}

#[test]
fn empty_and_headerless_record_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.records.jsonl");
    std::fs::write(&empty, "").unwrap();
    let e = report_records(&empty, None, None).unwrap_err();
    assert!(
        matches!(e, CliError::Records(_)) && e.exit_code() == 1,
        "{e}"
    );
    let out = bin().arg("report").arg(&empty).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let cfg = ExperimentConfig::from_toml(&golden("budget_report")).unwrap();
    let rec = execute(&cfg, RunOptions::default()).unwrap().records;
    let header = serde_json::to_string(&rec.header).unwrap();
    let only_header = dir.path().join("h.records.jsonl");
    std::fs::write(&only_header, format!("{header}\n")).unwrap();
    assert!(matches!(
        report_records(&only_header, None, None),
        Err(CliError::Records(_))
    ));
}

#[test]
fn header_experiment_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(&golden("budget_report")).unwrap();
    let mut rec = execute(&cfg, RunOptions::default()).unwrap().records;
    rec.header.experiment = "rb".into();
    let path = dir.path().join("m.records.jsonl");
    std::fs::write(&path, dualrail_cli::records::encode(&rec).unwrap()).unwrap();
    let e = report_records(&path, None, None).unwrap_err();
    assert!(e.to_string().contains("rb"), "{e}");
}

#[test]
fn desk_scale_caps_need_the_override() {
    let mut text = golden("rb").replace("depths = [2, 16, 64, 200]", "depths = [2, 16, 64, 2000]");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let e = execute(&cfg, RunOptions::default()).err().unwrap();
    assert!(
        matches!(e, CliError::ResourceBound(_)) && e.exit_code() == 1,
        "{e}"
    );
    text = text
        .replace("circuits = 10", "circuits = 1")
        .replace("shots = 100", "shots = 2");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    execute(&cfg, RunOptions { allow_large: true }).unwrap();

    let many = golden("erasure_metrics").replace("shots = 20000", "shots = 2000000");
    let e = execute(
        &ExperimentConfig::from_toml(&many).unwrap(),
        RunOptions::default(),
    )
    .err()
    .unwrap();
    assert!(matches!(e, CliError::ResourceBound(_)));
}

#[test]
fn calibrated_gates_require_trajectory_mode() {
    let text =
        golden("ramsey").replace("[noise]", "[execution]\ngates = \"calibrated\"\n\n[noise]");
    let e = execute(
        &ExperimentConfig::from_toml(&text).unwrap(),
        RunOptions::default(),
    )
    .err()
    .unwrap();
    assert!(matches!(e, CliError::Config(_)), "{e}");
}

#[test]
fn invalid_physics_parameters_are_user_errors() {
    let text = golden("erasure_metrics")
        .replace("[readout]", "[check]\np_false_negative = 1.5\n\n[readout]");
    let e = execute(
        &ExperimentConfig::from_toml(&text).unwrap(),
        RunOptions::default(),
    )
    .err()
    .unwrap();
    assert_eq!(e.exit_code(), 1, "{e}");
}

/// Both policies evaluated on the same records give one row set each.
#[test]
fn policy_comparison_on_rb_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(&golden("rb")).unwrap();
    let art = dualrail_cli::run_config(&cfg, dir.path(), RunOptions::default()).unwrap();
    let both = [
        PostselectionPolicy::Both,
        PostselectionPolicy::MidChecksOnly,
    ];
    let (a, _) = report_records(&art.records, Some(&both), None).unwrap();
    for m in [
        "epsilon_both",
        "epsilon_mid_checks_only",
        "r_both",
        "r_mid_checks_only",
        "bias_both",
    ] {
        assert!(a.get(m).is_some(), "{m}");
    }
    let e = a.get("epsilon_both").unwrap().value;
    let r = a.get("r_both").unwrap().value;
    assert!((a.get("bias_both").unwrap().value - e / r).abs() < 1e-12 * (e / r));
    let (only, _) = report_records(&art.records, Some(&[PostselectionPolicy::None]), None).unwrap();
    assert!(only.get("epsilon_both").is_none());
}
