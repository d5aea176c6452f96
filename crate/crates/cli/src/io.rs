//! File helpers: corpora, checkpoints, delimited tables, manifests.

use std::fs;
use std::path::{Path, PathBuf};

use rwprover::corpus::{read_proofs, read_repairs, read_statements, RepairLine};
use rwprover::curation::{ProofRecord, StatementRecord};
use rwprover::policy::{Arch, PolicyParams};

use crate::config::RunConfig;
use crate::HarnessError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn load_statements(path: &Path) -> Result<Vec<StatementRecord>, HarnessError> {
    read_statements(&read_text(path)?).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn load_proofs(path: &Path) -> Result<Vec<ProofRecord>, HarnessError> {
    read_proofs(&read_text(path)?).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn load_repairs(path: &Path) -> Result<Vec<RepairLine>, HarnessError> {
    read_repairs(&read_text(path)?).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path, arch: &Arch) -> Result<PolicyParams, HarnessError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    PolicyParams::from_bytes_expecting(&bytes, arch).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn save_checkpoint(path: &Path, theta: &PolicyParams) -> Result<(), HarnessError> {
    write_file(path, theta.to_bytes())
}

/// Writes a comma-delimited table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    write_file(path, bytes)
}

/// Reads a table written by [`write_table`] as (header, rows).
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    Ok((header, rows))
}

pub fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.out)
}

pub fn manifest_path(cfg: &RunConfig, stage: &str) -> PathBuf {
    out_dir(cfg).join(format!("{stage}.manifest.toml"))
}

pub fn write_manifest(cfg: &RunConfig, stage: &str) -> Result<PathBuf, HarnessError> {
    let path = manifest_path(cfg, stage);
    let text = format!("# resolved configuration of the `{stage}` stage; replay with --config\n{}", cfg.to_text());
    write_file(&path, text)?;
    Ok(path)
}
