//! CSV outputs and their JSON sidecars.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::fail::Failure;

/// Shortest representation that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `header` and `rows` as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    version: &'a str,
    rng: &'a str,
    config: &'a RunConfig,
    seeds: Value,
    outputs: Vec<String>,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    summary: Value,
}

/// Clock and bookkeeping of one command.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub command: &'static str,
    started: Instant,
    started_unix: u64,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    pub fn start(cfg: &'a RunConfig, command: &'static str) -> Result<Self, Failure> {
        fs::create_dir_all(&cfg.out)
            .map_err(|e| Failure::config(format!("cannot create output directory {}: {e}", cfg.out.display())))?;
        Ok(Run {
            cfg,
            command,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
        })
    }

    /// Path of an output file inside the output directory.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.cfg.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    /// Writes `<command>.json` next to the outputs and returns its path.
    pub fn finish(self, seeds: Value, summary: Value) -> Result<PathBuf, Failure> {
        let side = Sidecar {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            rng: bridgevol::stochastic::RNG_ALGORITHM,
            config: self.cfg,
            seeds,
            outputs: self
                .outputs
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
            started_unix_seconds: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            summary,
        };
        let path = self.cfg.out.join(format!("{}.json", self.command.replace('-', "_")));
        fs::write(&path, serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(path)
    }
}
