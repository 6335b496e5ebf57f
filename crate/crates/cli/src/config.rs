use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use volret::ann::IndexConfig;
use volret::corpus::{metadata_path_for, Task};
use volret::experiments::{Mode, DEFAULT_SAMPLING_FRACTION};
use volret::metrics::{EvaluationConfig, SweepSpec};
use volret::pipeline::PipelineConfig;
use volret::retrieval::Method;
use volret::{Error, Result};

/// Declarative description of a sweep. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub embeddings: PathBuf,
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default = "all_modes")]
    pub modes: BTreeSet<Mode>,
    #[serde(default = "all_organs")]
    pub organs: BTreeSet<Task>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "all_methods")]
    pub methods: BTreeSet<Method>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn all_modes() -> BTreeSet<Mode> {
    Mode::ALL.into_iter().collect()
}

fn all_organs() -> BTreeSet<Task> {
    Task::ALL.into_iter().collect()
}

fn default_p() -> f64 {
    DEFAULT_SAMPLING_FRACTION
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn all_methods() -> BTreeSet<Method> {
    Method::ALL.into_iter().collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read run config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.embeddings = base.join(&cfg.embeddings);
        cfg.metadata = cfg.metadata.map(|m| base.join(m));
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.metadata
            .clone()
            .unwrap_or_else(|| metadata_path_for(&self.embeddings))
    }

    pub fn sweep(&self) -> SweepSpec {
        SweepSpec {
            modes: self.modes.clone(),
            organs: self.organs.clone(),
            p: self.p,
            seeds: self.seeds.clone(),
        }
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        EvaluationConfig {
            index: self.index,
            pipeline: self.pipeline.clone(),
            methods: self.methods.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for path in [&self.embeddings, &self.metadata_path()] {
            if !path.is_file() {
                return Err(Error::Input(format!("input file {} does not exist", path.display())));
            }
        }
        self.sweep().validate()?;
        self.evaluation().validate()
    }
}
