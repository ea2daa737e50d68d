use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use msc_core::forest::{fan_in_stats, MscForest};
use msc_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Machine-readable record of one command invocation.
pub struct RunLog {
    command: &'static str,
    config: Value,
    seed: u64,
    start: Instant,
    timings: Vec<(String, f64)>,
    extra: serde_json::Map<String, Value>,
}

pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl RunLog {
    pub fn new(command: &'static str, config: &impl Serialize, seed: u64) -> Self {
        Self {
            command,
            config: serde_json::to_value(config).expect("config serialises"),
            seed,
            start: Instant::now(),
            timings: Vec::new(),
            extra: Default::default(),
        }
    }

    pub fn hash(&self) -> String {
        config_hash(&self.config)
    }

    /// Runs `f`, recording its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push((phase.to_string(), t.elapsed().as_secs_f64() * 1e3));
        out
    }

    pub fn phase_ms(&mut self, phase: &str, ms: f64) {
        self.timings.push((phase.to_string(), ms));
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.extra
            .insert(key.to_string(), serde_json::to_value(value).expect("value serialises"));
    }

    pub fn forest(&mut self, forest: &MscForest) {
        let stats = fan_in_stats(forest);
        self.set(
            "fan_in",
            json!({ "mean": stats.mean, "per_tree": stats.per_tree, "path_length_histogram": stats.path_length_histogram }),
        );
    }

    pub fn write(self, artifact: &Path) -> Result<PathBuf> {
        let path = log_path(artifact);
        let timings: serde_json::Map<String, Value> = self.timings.into_iter().map(|(k, v)| (k, json!(v))).collect();
        let mut doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": self.seed,
            "config_hash": config_hash(&self.config),
            "config": self.config,
            "timings_ms": timings,
            "total_ms": self.start.elapsed().as_secs_f64() * 1e3,
        });
        doc.as_object_mut().expect("object").extend(self.extra);
        let text = serde_json::to_string_pretty(&doc).expect("log serialises");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// `<artifact>.run.json`, placed inside the artifact when it is a directory.
pub fn log_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join("run.json")
    } else {
        let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".run.json");
        artifact.with_file_name(name)
    }
}
