//! Artifact writing. Every file is written to a temporary sibling and renamed
//! into place, so an interrupted run never leaves a half-written file.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::run::{Artifacts, Table};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

pub fn table_bytes(table: &Table) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))
}

/// Writes every artifact plus `report.json`, returning the report.
pub fn write_all(dir: &Path, cfg: &ExperimentConfig, art: &Artifacts, wall_clock_seconds: f64) -> std::io::Result<Value> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, table) in &art.tables {
        write_atomic(dir, name, &table_bytes(table)?)?;
        files.push(name.clone());
    }
    for (name, svg) in &art.plots {
        write_atomic(dir, name, svg.as_bytes())?;
        files.push(name.clone());
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "eigenpath",
        "version": eigenpath::VERSION,
        "experiment": cfg.kind(),
        "config": cfg,
        "config_sha256": sha256_hex(cfg.canonical_json().as_bytes()),
        "seed": cfg.seed,
        "mode": cfg.plan.mode,
        "artifacts": files,
        "result": art.result,
        "wall_clock_seconds": wall_clock_seconds,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(dir, "report.json", text.as_bytes())?;
    Ok(report)
}
