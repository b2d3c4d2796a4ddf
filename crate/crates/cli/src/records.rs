//! Line-delimited record files: one JSON header line, then one JSON object
//! per shot (or per result row for analytic experiments).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use dualrail::dynamics::record::ShotRecord;
use dualrail::dynamics::schedule::Schedule;
use dualrail::protocols::GateParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    /// SHA-256 of the JSON encoding of every compiled schedule, in order.
    pub schedule_hash: String,
    /// Gate parameters used to compile the schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates: Option<GateParams>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Shots(Vec<ShotRecord>),
    Rows(Vec<serde_json::Value>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Shots(v) => v.len(),
            Payload::Rows(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFile {
    pub header: Header,
    pub payload: Payload,
}

pub fn schedule_hash(schedules: &[&Schedule]) -> String {
    let bytes = serde_json::to_vec(schedules).expect("schedules serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn encode(file: &RecordFile) -> Result<Vec<u8>, CliError> {
    let json = |e: serde_json::Error| CliError::Internal(format!("record encoding: {e}"));
    let mut out = serde_json::to_vec(&file.header).map_err(json)?;
    out.push(b'\n');
    match &file.payload {
        Payload::Shots(v) => {
            for r in v {
                serde_json::to_writer(&mut out, r).map_err(json)?;
                out.push(b'\n');
            }
        }
        Payload::Rows(v) => {
            for r in v {
                serde_json::to_writer(&mut out, r).map_err(json)?;
                out.push(b'\n');
            }
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<RecordFile, CliError> {
    let f = std::fs::File::open(path)
        .map_err(|e| CliError::Records(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(f).lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(CliError::Records(format!("{} is empty", path.display()))),
    };
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| CliError::Records(format!("bad header line: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(CliError::Records(format!(
            "schema version {} not supported (expected {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    if header.experiment != header.config.experiment.name() {
        return Err(CliError::Records(format!(
            "header names experiment '{}' but its config is '{}'",
            header.experiment,
            header.config.experiment.name()
        )));
    }
    let analytic = header.config.experiment.is_analytic();
    let mut shots = Vec::new();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| CliError::Records(format!("line {}: {e}", k + 2));
        if analytic {
            rows.push(serde_json::from_str(&line).map_err(bad)?);
        } else {
            shots.push(serde_json::from_str(&line).map_err(bad)?);
        }
    }
    let payload = if analytic {
        Payload::Rows(rows)
    } else {
        Payload::Shots(shots)
    };
    if payload.is_empty() {
        return Err(CliError::Records(format!(
            "{} has a header but no records",
            path.display()
        )));
    }
    Ok(RecordFile { header, payload })
}
