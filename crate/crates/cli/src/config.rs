//! Run configuration: one JSON document, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use geomatch_core::candidates::{SplitSpec, DEFAULT_JOIN_BUFFER_M, DEFAULT_ROAD_TYPES};
use geomatch_core::features::FeatureConfig;
use geomatch_core::heuristics::{HeuristicKind, ThresholdGrids};
use geomatch_core::Task;
use geomatch_llm::inference::{FailurePolicy, DEFAULT_IN_FLIGHT};
use geomatch_llm::prompt::{GenerationParams, PromptMode, Shots};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub features: FeatureConfig,
    pub candidates: CandidateConfig,
    pub split: SplitSpec,
    /// Threshold lists keyed by heuristic kind; missing kinds use the task defaults.
    pub grids: BTreeMap<String, Vec<f64>>,
    pub prompt: PromptConfig,
    pub generation: GenerationParams,
    pub backend: BackendConfig,
    pub in_flight: usize,
    pub failure_policy: FailurePolicy,
    pub refine: RefineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Join,
            features: FeatureConfig::default(),
            candidates: CandidateConfig::default(),
            split: SplitSpec::default(),
            grids: BTreeMap::new(),
            prompt: PromptConfig::default(),
            generation: GenerationParams::default(),
            backend: BackendConfig::default(),
            in_flight: DEFAULT_IN_FLIGHT,
            failure_policy: FailurePolicy::Incorrect,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    pub join_buffer_m: f64,
    pub road_types: Vec<String>,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            join_buffer_m: DEFAULT_JOIN_BUFFER_M,
            road_types: DEFAULT_ROAD_TYPES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub mode: PromptMode,
    pub shots: Shots,
    /// Heuristics covered by hints and features; defaults to all kinds of the task.
    pub heuristics: Option<Vec<HeuristicKind>>,
    /// `[positive_id, negative_id]` few-shot exemplars; defaults to the first of each label.
    pub exemplars: Option<[String; 2]>,
    pub template_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => bail!("unknown backend {other:?} (expected mock or http)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Mock response script: a JSON object of lookup key to reply text.
    pub script: Option<PathBuf>,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub timeout_s: u64,
    pub min_interval_ms: Option<u64>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            script: None,
            max_attempts: 5,
            base_delay_ms: 1000,
            timeout_s: 120,
            min_interval_ms: None,
        }
    }
}

impl BackendConfig {
    pub fn base_delay(&self) -> Duration {
        Duration::from_millis(self.base_delay_ms)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    #[default]
    Random,
    /// Best spec of a sweep report.
    Best,
    /// Worst spec of a sweep report.
    Worst,
    /// An explicit spec.
    Spec,
}

impl std::str::FromStr for InitialKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitialKind::Random),
            "best" => Ok(InitialKind::Best),
            "worst" => Ok(InitialKind::Worst),
            "spec" => Ok(InitialKind::Spec),
            other => bail!("unknown initial source {other:?} (expected random, best, worst or spec)"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub initial: InitialKind,
    pub seed: u64,
    pub spec: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.split.validate()?;
        self.generation.validate()?;
        self.grids()?;
        if !(self.candidates.join_buffer_m >= 0.0) || !self.candidates.join_buffer_m.is_finite() {
            bail!("candidates.join_buffer_m must be a finite value >= 0");
        }
        if self.in_flight == 0 {
            bail!("in_flight must be >= 1");
        }
        if self.backend.max_attempts == 0 {
            bail!("backend.max_attempts must be >= 1");
        }
        for (what, path) in [
            ("backend.script", &self.backend.script),
            ("prompt.template_dir", &self.prompt.template_dir),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{what}: {} does not exist", p.display());
                }
            }
        }
        if let Some(kinds) = &self.prompt.heuristics {
            if let Some(k) = kinds.iter().find(|k| !k.valid_for(self.task)) {
                bail!("prompt.heuristics: {k:?} does not apply to the {} task", self.task);
            }
        }
        Ok(())
    }

    pub fn grids(&self) -> Result<ThresholdGrids> {
        Ok(ThresholdGrids::from_map(self.task, &self.grids)?)
    }

    /// sha256 of the effective configuration's canonical JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
