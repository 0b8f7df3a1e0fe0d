//! Run configuration: a sectioned TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evaluation::ImpactParams;
use crate::featfactory::{default_specs, DEFAULT_WINDOWS};
use crate::governance::{desk_grid, full_grid, ExperimentConfig, SelectionMetric, TemporalConfig};
use crate::labeling::TaskId;
use crate::synthworld::WorldConfig;
use crate::workflow::EvalSettings;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Artifact root; relative paths resolve against the config file's directory.
    pub output: PathBuf,
    /// Source extracts for `ingest`. When unset, `ingest` reads `raw/` from `generate`.
    pub containers: Option<PathBuf>,
    pub events: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("out"),
            containers: None,
            events: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub grid: GridChoice,
    pub seed: u64,
    pub tasks: Vec<TaskId>,
    pub windows: Vec<u32>,
    pub train_stride_days: u32,
    pub service_k_fraction: f64,
    pub max_splits: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            grid: GridChoice::Desk,
            seed: 7,
            tasks: TaskId::ALL.to_vec(),
            windows: DEFAULT_WINDOWS.to_vec(),
            train_stride_days: 1,
            service_k_fraction: 0.17,
            max_splits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageSection {
    pub threshold: f64,
}

impl Default for LinkageSection {
    fn default() -> Self {
        Self {
            threshold: crate::linkage::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsSection {
    pub floor: f64,
}

impl Default for HsSection {
    fn default() -> Self {
        Self {
            floor: crate::hsclass::DEFAULT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub metric: SelectionMetric,
    pub k_sweep: Vec<usize>,
    pub random_seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// `[delta_s, delta_d]` pairs.
    pub impact: Vec<[f64; 2]>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let d = EvalSettings::default();
        let p = ImpactParams::new(0.0, 0.0);
        Self {
            metric: d.metric,
            k_sweep: d.k_sweep,
            random_seed: d.random_seed,
            alpha: p.alpha,
            beta: p.beta,
            impact: d.impact.iter().map(|p| [p.delta_s, p.delta_d]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub world: Option<WorldConfig>,
    pub temporal: TemporalConfig,
    pub experiment: ExperimentSection,
    pub linkage: LinkageSection,
    pub hsclass: HsSection,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.output);
        self.paths.containers.as_mut().map(fix);
        self.paths.events.as_mut().map(fix);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Some(w) = &self.world {
            w.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.temporal.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let x = &self.experiment;
        if x.tasks.is_empty() {
            return bad("experiment.tasks is empty".into());
        }
        if x.windows.is_empty() || x.windows.contains(&0) {
            return bad("experiment.windows must be non-empty and positive".into());
        }
        if x.train_stride_days == 0 {
            return bad("experiment.train_stride_days must be positive".into());
        }
        if !(x.service_k_fraction > 0.0 && x.service_k_fraction <= 1.0) {
            return bad("experiment.service_k_fraction must lie in (0, 1]".into());
        }
        if x.max_splits == Some(0) {
            return bad("experiment.max_splits must be positive".into());
        }
        if !(self.linkage.threshold > 0.0 && self.linkage.threshold <= 1.0) {
            return bad("linkage.threshold must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.hsclass.floor) {
            return bad("hsclass.floor must lie in [0, 1]".into());
        }
        let e = &self.evaluation;
        if e.k_sweep.is_empty() || e.k_sweep.contains(&0) {
            return bad("evaluation.k_sweep must be non-empty and positive".into());
        }
        for v in [e.alpha, e.beta].iter().chain(e.impact.iter().flatten()) {
            if !(0.0..=1.0).contains(v) {
                return bad(format!("impact parameter {v} outside [0, 1]"));
            }
        }
        if self.paths.containers.is_some() != self.paths.events.is_some() {
            return bad("paths.containers and paths.events must be given together".into());
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON of every setting that affects results.
    /// Paths are excluded so the same run in two locations shares a digest.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("paths");
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("value serializes")))
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let x = &self.experiment;
        ExperimentConfig {
            temporal: self.temporal.clone(),
            tasks: x.tasks.clone(),
            grid: match x.grid {
                GridChoice::Desk => desk_grid(x.seed),
                GridChoice::Full => full_grid(x.seed),
            },
            feature_specs: default_specs(&x.windows),
            train_stride_days: x.train_stride_days,
            service_k_fraction: x.service_k_fraction,
            max_splits: x.max_splits,
            config_digest: self.digest(),
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        let e = &self.evaluation;
        EvalSettings {
            metric: e.metric,
            k_sweep: e.k_sweep.clone(),
            random_seed: e.random_seed,
            impact: e
                .impact
                .iter()
                .map(|&[ds, dd]| ImpactParams {
                    alpha: e.alpha,
                    beta: e.beta,
                    delta_s: ds,
                    delta_d: dd,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse_and_digest_ignores_paths() {
        let text = r#"
[paths]
output = "elsewhere"

[world]
n_containers = 500
start_date = "2021-01-01"
end_date = "2021-06-01"

[temporal]
data_start = "2021-01-01"
data_end = "2021-06-01"
train_window = "90d"

[experiment]
grid = "full"
tasks = ["service", "dt1"]
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.world.as_ref().unwrap().n_containers, 500);
        assert_eq!(cfg.experiment_config().grid.len(), 29);
        let mut moved = cfg.clone();
        moved.paths.output = PathBuf::from("/tmp/x");
        assert_eq!(cfg.digest(), moved.digest());
        let mut other = cfg.clone();
        other.linkage.threshold = 0.7;
        assert_ne!(cfg.digest(), other.digest());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("[experiment]\ngrdi = \"desk\"").is_err());
        let mut cfg = RunConfig::default();
        cfg.evaluation.impact.push([1.5, 0.0]);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.paths.containers = Some("a.csv".into());
        assert!(cfg.validate().is_err());
    }
}
