//! Batch front end for the dual-rail simulator: TOML experiment configs in,
//! line-delimited records, summary tables and plot columns out.

pub mod config;
pub mod error;
pub mod records;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use dualrail::analysis::PostselectionPolicy;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use report::{analyze, Analysis};
pub use run::{execute, RunOptions};

/// Files written by [`run_config`].
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub analysis: Analysis,
}

/// Summary table path next to a record file: `x.records.jsonl` → `x.summary.tsv`.
pub fn summary_path(records: &Path) -> PathBuf {
    let name = records
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("records");
    let stem = name
        .strip_suffix(".records.jsonl")
        .or_else(|| name.strip_suffix(".jsonl"))
        .unwrap_or(name);
    records.with_file_name(format!("{stem}.summary.tsv"))
}

/// Runs a configuration; relative output directories resolve against `base`.
pub fn run_config(
    cfg: &ExperimentConfig,
    base: &Path,
    opts: RunOptions,
) -> Result<Artifacts, CliError> {
    let dir = base.join(&cfg.output.dir);
    let name = cfg.output_name();
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(CliError::Config(format!(
            "output.name '{name}' must be a plain file stem"
        )));
    }
    let out = execute(cfg, opts)?;
    let records = dir.join(format!("{name}.records.jsonl"));
    records::write_atomic(&records, &records::encode(&out.records)?)?;
    let calibration = match &out.calibration {
        Some(c) => {
            let p = dir.join(format!("{name}.calibration.json"));
            let json = serde_json::to_vec_pretty(&c.state)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            records::write_atomic(&p, &json)?;
            Some(p)
        }
        None => None,
    };
    let analysis = analyze(&out.records, None)?;
    let summary = summary_path(&records);
    records::write_atomic(&summary, analysis.summary_tsv().as_bytes())?;
    let mut plots = Vec::new();
    for p in &analysis.plots {
        let path = dir.join(format!("{}.tsv", p.name));
        records::write_atomic(&path, report::plot_tsv(p).as_bytes())?;
        plots.push(path);
    }
    Ok(Artifacts {
        records,
        summary,
        plots,
        calibration,
        analysis,
    })
}

/// Re-analyzes an existing record file and writes its summary table to
/// `out` (default: next to the records).
pub fn report_records(
    records: &Path,
    policies: Option<&[PostselectionPolicy]>,
    out: Option<&Path>,
) -> Result<(Analysis, PathBuf), CliError> {
    let file = records::read(records)?;
    let analysis = analyze(&file, policies)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| summary_path(records));
    records::write_atomic(&path, analysis.summary_tsv().as_bytes())?;
    Ok((analysis, path))
}
