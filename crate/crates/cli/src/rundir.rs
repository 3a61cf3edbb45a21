use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use wdn_pse::report::sha256_hex;

/// Output directory plus the manifest describing how it was produced.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    args: Vec<String>,
    inputs: Vec<Value>,
    scenario_hash: Option<String>,
    seed: Option<u64>,
    outputs: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(path: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            inputs: Vec::new(),
            scenario_hash: None,
            seed: None,
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "sha256": sha256_hex(bytes),
        }));
    }

    pub fn scenario(&mut self, bytes: &[u8]) -> String {
        let h = sha256_hex(bytes);
        self.scenario_hash = Some(h.clone());
        h
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(name.into());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        let manifest = json!({
            "command": self.command,
            "args": self.args,
            "inputs": self.inputs,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "threads": wdn_pse::lab::current_threads(),
            "elapsed_s": self.started.elapsed().as_secs_f64(),
            "outputs": self.outputs,
        });
        let path = self.path.clone();
        self.outputs.clear();
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(path.join("run_manifest.json"), s)?;
        Ok(path)
    }
}
