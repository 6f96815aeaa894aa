//! Files written by a run: one JSON report and some CSV tables per command,
//! a manifest and a summary.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::commands::Outcome;
use crate::config::ScenarioConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library_version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub n_paths: usize,
    pub grid: Value,
    pub commands: Vec<&'static str>,
}

impl Manifest {
    pub fn new(config_text: &str, cfg: &ScenarioConfig, outcomes: &[Outcome]) -> Self {
        let hash = Sha256::digest(config_text.as_bytes());
        Manifest {
            schema_version: SCHEMA_VERSION,
            library_version: env!("CARGO_PKG_VERSION"),
            config_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
            seed: cfg.seed,
            n_paths: cfg.n_paths,
            grid: serde_json::to_value(&cfg.grid).expect("grid serializes"),
            commands: outcomes.iter().map(|o| o.command.name()).collect(),
        }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn status(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

/// Writes every outcome plus `manifest.json` and `summary.json` into `dir`.
/// With no outcomes only the manifest is written.
pub fn write_report(dir: &Path, manifest: &Manifest, outcomes: &[Outcome]) -> Result<Value> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for o in outcomes {
        let name = o.command.name();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": name,
            "status": status(o.pass),
            "result": o.report,
        });
        write_json(&dir.join(format!("{name}.json")), &doc)?;
        for t in &o.tables {
            let path = dir.join(format!("{name}.{}.csv", t.name));
            fs::write(&path, &t.content).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    write_json(&dir.join("manifest.json"), manifest)?;
    let all = outcomes.iter().all(|o| o.pass);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "status": status(all),
        "commands": outcomes.iter().map(|o| json!({"command": o.command.name(), "status": status(o.pass)})).collect::<Vec<_>>(),
        "failing": outcomes.iter().filter(|o| !o.pass).map(|o| o.command.name()).collect::<Vec<_>>(),
    });
    if !outcomes.is_empty() {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}
