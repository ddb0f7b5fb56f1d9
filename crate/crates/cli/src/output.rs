//! Run directories: diagnostics, snapshots and the manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use hosf_core::grid::OrbitalSet;
use hosf_core::HosfError;
use serde_json::{json, Value};

pub struct RunDir {
    pub root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, HosfError> {
        fs::create_dir_all(root.join("snapshots"))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), HosfError> {
        fs::write(self.root.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// One file per orbital: `snapshots/<tag>_orbital<k>.bin`.
    pub fn write_snapshot(&mut self, tag: &str, set: &OrbitalSet) -> Result<(), HosfError> {
        for (k, f) in set.orbitals().iter().enumerate() {
            let name = format!("snapshots/{tag}_orbital{}.bin", k + 1);
            let mut w = BufWriter::new(File::create(self.root.join(&name))?);
            f.write_snapshot(&mut w)?;
            w.flush()?;
            self.files.push(name);
        }
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

pub struct Manifest {
    pub command: &'static str,
    pub config_path: PathBuf,
    pub config: Value,
    pub resolved: Value,
    pub started: SystemTime,
    pub elapsed: Duration,
    pub status: &'static str,
    pub error: Option<String>,
    pub extra: Value,
}

impl Manifest {
    pub fn to_json(&self, files: &[String]) -> Value {
        json!({
            "tool": "hosf",
            "cli_version": env!("CARGO_PKG_VERSION"),
            "core_version": hosf_core::VERSION,
            "command": self.command,
            "config_path": self.config_path.display().to_string(),
            "config": self.config,
            "resolved_scenario": self.resolved,
            "threads": rayon::current_num_threads(),
            "started_at": humantime::format_rfc3339_seconds(self.started).to_string(),
            "wall_clock_seconds": self.elapsed.as_secs_f64(),
            "status": self.status,
            "error": self.error,
            "run": self.extra,
            "outputs": files,
        })
    }

    pub fn write(&self, dir: &RunDir) -> Result<(), HosfError> {
        let text = serde_json::to_string_pretty(&self.to_json(dir.files()))
            .map_err(|e| HosfError::Snapshot(e.to_string()))?;
        fs::write(dir.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
