//! Workspace directory, manifest bookkeeping and staleness checks.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Featurize,
    Index,
    Train,
    Embed,
    Aggregate,
    Cluster,
    Project,
    Export,
    /// Query over region embeddings; checked but not recorded.
    Arith,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Featurize,
        Stage::Index,
        Stage::Train,
        Stage::Embed,
        Stage::Aggregate,
        Stage::Cluster,
        Stage::Project,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Featurize => "featurize",
            Stage::Index => "index",
            Stage::Train => "train",
            Stage::Embed => "embed",
            Stage::Aggregate => "aggregate",
            Stage::Cluster => "cluster",
            Stage::Project => "project",
            Stage::Export => "export",
            Stage::Arith => "arith",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Featurize | Stage::Index => &[Stage::Ingest],
            Stage::Train => &[Stage::Ingest, Stage::Featurize],
            Stage::Embed => &[Stage::Featurize, Stage::Train],
            Stage::Aggregate => &[Stage::Index, Stage::Embed],
            Stage::Cluster => &[Stage::Featurize, Stage::Index, Stage::Aggregate],
            Stage::Project => &[Stage::Ingest, Stage::Index, Stage::Aggregate],
            Stage::Export => &[Stage::Aggregate, Stage::Cluster, Stage::Project],
            Stage::Arith => &[Stage::Ingest, Stage::Index, Stage::Aggregate],
        }
    }

    /// Upstream closure in pipeline order.
    pub fn ancestors(self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        let mut todo: Vec<Stage> = self.upstream().to_vec();
        while let Some(s) = todo.pop() {
            if !out.contains(&s) {
                out.push(s);
                todo.extend_from_slice(s.upstream());
            }
        }
        out.sort();
        out
    }

    /// The slice of configuration an already-run stage must still agree with.
    pub fn tracked_config(self, cfg: &Config) -> Value {
        match self {
            Stage::Ingest => serde_json::json!({ "driveable": cfg.driveable }),
            Stage::Featurize => serde_json::json!({ "schema": cfg.schema }),
            Stage::Index => serde_json::json!({ "resolution": cfg.resolution }),
            Stage::Train => serde_json::json!({ "seed": cfg.seed, "model": cfg.model, "train": cfg.train }),
            _ => Value::Null,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub city: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub config: Value,
    /// Workspace files read, with their hashes at run time.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: Option<String>,
    pub resolution: Option<u8>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputFile>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Data(format!("workspace {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn manifest(&self) -> Result<Manifest, CliError> {
        let path = self.path(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save_manifest(&self, m: &Manifest) -> Result<(), CliError> {
        fs::write(self.path(MANIFEST), serde_json::to_string_pretty(m)? + "\n")?;
        Ok(())
    }

    fn hash(&self, file: &str) -> Option<String> {
        sha256_file(&self.path(file)).ok()
    }

    /// Refuses to continue unless every upstream stage has run, its outputs
    /// are untouched, its own inputs are current and its tracked config
    /// still matches. The first offending stage in pipeline order is named.
    pub fn check_upstream(&self, stage: Stage, cfg: &Config) -> Result<Manifest, CliError> {
        let manifest = self.manifest()?;
        for up in stage.ancestors() {
            let stale = |reason: String| CliError::Stale {
                stage: up.name().to_string(),
                reason,
            };
            let Some(rec) = manifest.stages.get(up.name()) else {
                return Err(stale(format!("it has not been run (needed by `{stage}`)")));
            };
            for (file, hash) in &rec.outputs {
                match self.hash(file) {
                    None => return Err(stale(format!("its output {file} is missing"))),
                    Some(h) if &h != hash => return Err(stale(format!("its output {file} was modified"))),
                    _ => {}
                }
            }
            for (file, hash) in &rec.inputs {
                if self.hash(file).as_ref() != Some(hash) {
                    return Err(stale(format!("its input {file} changed after it ran")));
                }
            }
            let tracked = up.tracked_config(cfg);
            if rec.config != tracked {
                return Err(stale(format!("configuration changed: was {}, now {}", rec.config, tracked)));
            }
        }
        Ok(manifest)
    }

    /// Output files of the direct upstream stages, with current hashes.
    pub fn upstream_inputs(&self, stage: Stage, manifest: &Manifest) -> BTreeMap<String, String> {
        stage
            .upstream()
            .iter()
            .filter_map(|s| manifest.stages.get(s.name()))
            .flat_map(|r| r.outputs.iter().map(|(f, h)| (f.clone(), h.clone())))
            .collect()
    }

    pub fn record(
        &self,
        manifest: &mut Manifest,
        stage: Stage,
        cfg: &Config,
        inputs: BTreeMap<String, String>,
        outputs: &[&str],
    ) -> Result<BTreeMap<String, String>, CliError> {
        let mut hashes = BTreeMap::new();
        for &f in outputs {
            let h = self.hash(f).ok_or_else(|| CliError::Data(format!("stage {stage} did not write {f}")))?;
            hashes.insert(f.to_string(), h);
        }
        manifest.stages.insert(
            stage.name().to_string(),
            StageRecord {
                config: stage.tracked_config(cfg),
                inputs,
                outputs: hashes.clone(),
            },
        );
        self.save_manifest(manifest)?;
        Ok(hashes)
    }

    pub fn write_log(&self, log: &RunLog) -> Result<(), CliError> {
        let dir = self.path("logs");
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("{}.json", log.stage)), serde_json::to_string_pretty(log)? + "\n")?;
        Ok(())
    }
}

/// Per-stage run log with the effective configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub stage: String,
    pub seed: u64,
    pub started_unix_s: u64,
    pub duration_ms: f64,
    pub config: Config,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub notes: BTreeMap<String, Value>,
}

pub struct Timer {
    started: SystemTime,
    clock: Instant,
}

impl Timer {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn started_unix_s(&self) -> u64 {
        self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.clock.elapsed().as_secs_f64() * 1e3
    }
}
