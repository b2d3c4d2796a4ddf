//! Every golden config runs deterministically and reproduces its pinned
//! summary. Set DUALRAIL_BLESS=1 to rewrite the pins.

use std::path::{Path, PathBuf};

use dualrail_cli::{report_records, run_config, ExperimentConfig, RunOptions};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

fn goldens() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn run_into(cfg_path: &Path, dir: &Path) -> dualrail_cli::Artifacts {
    let cfg = ExperimentConfig::load(cfg_path).unwrap();
    run_config(&cfg, dir, RunOptions::default()).unwrap()
}

fn parse_summary(text: &str) -> Vec<(String, f64, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

#[test]
fn every_experiment_type_has_a_golden_config() {
    let types: Vec<String> = goldens()
        .iter()
        .map(|p| {
            ExperimentConfig::load(p)
                .unwrap()
                .experiment
                .name()
                .to_string()
        })
        .collect();
    for t in [
        "spectroscopy",
        "ramsey",
        "echo",
        "cpmg",
        "t1_logical",
        "rb",
        "erasure_metrics",
        "check_dephasing_sweep",
        "operating_point_sweep",
        "budget_report",
    ] {
        assert!(types.iter().any(|x| x == t), "no golden config for {t}");
    }
}

#[test]
fn goldens_are_deterministic_and_pinned() {
    let bless = std::env::var_os("DUALRAIL_BLESS").is_some();
    for path in goldens() {
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_into(&path, a.path());
        let rb = run_into(&path, b.path());
        let bytes_a = std::fs::read(&ra.records).unwrap();
        assert_eq!(
            bytes_a,
            std::fs::read(&rb.records).unwrap(),
            "{stem}: records differ between runs"
        );
        for (pa, pb) in ra.plots.iter().zip(&rb.plots) {
            assert_eq!(
                std::fs::read(pa).unwrap(),
                std::fs::read(pb).unwrap(),
                "{stem}: plot differs"
            );
        }
        let summary = std::fs::read_to_string(&ra.summary).unwrap();
        let pin = golden_dir().join(format!("{stem}.expected.tsv"));
        if bless {
            std::fs::write(&pin, &summary).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&pin)
            .unwrap_or_else(|_| panic!("{stem}: missing pin {}", pin.display()));
        let (got, want) = (parse_summary(&summary), parse_summary(&expected));
        assert_eq!(got.len(), want.len(), "{stem}: metric count");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0, "{stem}");
            assert!(
                close(g.1, w.1) && close(g.2, w.2),
                "{stem}: {} = {} ± {}, pinned {} ± {}",
                g.0,
                g.1,
                g.2,
                w.1,
                w.2
            );
        }
    }
}

#[test]
fn report_reproduces_run_summary_from_records_alone() {
    for name in ["ramsey", "rb", "budget_report", "check_dephasing_sweep"] {
        let dir = tempfile::tempdir().unwrap();
        let art = run_into(&golden_dir().join(format!("{name}.toml")), dir.path());
        let out = dir.path().join("again.tsv");
        let (a, _) = report_records(&art.records, None, Some(&out)).unwrap();
        assert_eq!(
            a.summary_tsv(),
            std::fs::read_to_string(&art.summary).unwrap(),
            "{name}"
        );
    }
}

/// Rewriting the simulation settings in the header must not change the
/// analysis, since report only reads the stored records.
#[test]
fn report_does_not_resimulate() {
    let dir = tempfile::tempdir().unwrap();
    let art = run_into(&golden_dir().join("ramsey.toml"), dir.path());
    let text = std::fs::read_to_string(&art.records).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    let mut h: serde_json::Value = serde_json::from_str(header).unwrap();
    h["config"]["experiment"]["shots"] = serde_json::json!(1_000_000_000u64);
    h["config"]["noise"]["dephasing_rate"] = serde_json::json!(1e9);
    let edited = dir.path().join("edited.records.jsonl");
    std::fs::write(&edited, format!("{h}\n{body}")).unwrap();
    let (a, _) = report_records(&edited, None, None).unwrap();
    assert_eq!(a.summary_tsv(), art.analysis.summary_tsv());
}
