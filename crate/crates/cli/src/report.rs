//! Report files: a results table, JSON reports, run manifests and
//! atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use groundplan::metrics::Aggregate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::harness::ModeReport;

/// Writes through a sibling temp file and a rename, so a failed run never
/// leaves a half-written report in place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut file = std::fs::File::create(&tmp).map_err(fail)?;
    file.write_all(contents).and_then(|_| file.sync_all()).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(fail)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn cell(agg: &Aggregate, pick: impl Fn(&groundplan::EvalResult) -> f64) -> String {
    format!("{:.2} ± {:.2}", pick(&agg.mean), pick(&agg.std))
}

/// Executability, LCS and final correctness in percent, plus plan length,
/// as mean ± standard deviation over runs.
pub fn table(modes: &[ModeReport]) -> String {
    let header = ["Method", "Executability", "LCS", "Final correctness", "Plan length"];
    let mut rows = vec![header.map(String::from).to_vec()];
    for m in modes {
        let s = &m.summary;
        rows.push(vec![
            m.label.clone(),
            cell(s, |r| r.executability),
            cell(s, |r| r.lcs * 100.0),
            cell(s, |r| r.correctness_percent()),
            cell(s, |r| r.plan_length),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v}{}", " ".repeat(w - v.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

/// Everything that determines a run's outputs, plus wall-clock timestamps.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub backend: String,
    /// SHA-256 over the command, config, backend and input file contents.
    pub content_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: u64,
        config: serde_json::Value,
        inputs: Vec<PathBuf>,
        backend: String,
        started_unix: u64,
    ) -> Result<Self, CliError> {
        let mut hasher = Sha256::new();
        for part in [command, &config.to_string(), &backend] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        for path in &inputs {
            let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        Ok(RunManifest {
            command: command.to_string(),
            seed,
            config,
            inputs,
            backend,
            content_hash: hex::encode(hasher.finalize()),
            started_unix,
            finished_unix: unix_now(),
        })
    }
}
