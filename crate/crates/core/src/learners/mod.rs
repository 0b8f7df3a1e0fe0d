//! Binary learners: CART trees, random forest, extra-trees and standardized
//! logistic regression, plus ROC analysis.

mod logistic;
mod roc;
mod tree;

pub use logistic::{logistic_gradient, logistic_objective, LogisticState};
pub use roc::{auc, roc_curve, youden_threshold, RocCurve, RocPoint};
pub use tree::{gini, Binner, Node, Tree};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::featfactory::FeatureMatrix;

pub const MODEL_VERSION: &str = "dwellcast-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DecisionTree,
    RandomForest,
    ExtraTrees,
    ScaledLogistic,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::DecisionTree => "decision_tree",
            Algorithm::RandomForest => "random_forest",
            Algorithm::ExtraTrees => "extra_trees",
            Algorithm::ScaledLogistic => "scaled_logistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt() as usize).max(1),
            MaxFeatures::All => n_features.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    /// `None` grows until purity or `min_samples_split`.
    pub max_depth: Option<u32>,
    pub min_samples_split: u32,
    pub n_estimators: u32,
    pub max_features: MaxFeatures,
    pub penalty: Penalty,
    pub regularization_c: f64,
    pub seed: u64,
    /// Overrides the per-algorithm bootstrap default (forest only by default).
    pub bootstrap: Option<bool>,
    /// Histogram bins per feature for exhaustive split search.
    pub max_bins: u32,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::DecisionTree,
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            n_estimators: 1,
            max_features: MaxFeatures::All,
            penalty: Penalty::L2,
            regularization_c: 1.0,
            seed: 0,
            bootstrap: None,
            max_bins: 256,
        }
    }
}

impl HyperParams {
    pub fn decision_tree(max_depth: u32, min_samples_split: u32) -> Self {
        Self {
            algorithm: Algorithm::DecisionTree,
            max_depth: Some(max_depth),
            min_samples_split,
            ..Self::default()
        }
    }

    pub fn random_forest(n_estimators: u32, max_depth: u32, min_samples_split: u32) -> Self {
        Self {
            algorithm: Algorithm::RandomForest,
            max_depth: Some(max_depth),
            min_samples_split,
            n_estimators,
            max_features: MaxFeatures::Sqrt,
            ..Self::default()
        }
    }

    pub fn extra_trees(n_estimators: u32, max_depth: u32, min_samples_split: u32) -> Self {
        Self {
            algorithm: Algorithm::ExtraTrees,
            max_depth: Some(max_depth),
            min_samples_split,
            n_estimators,
            max_features: MaxFeatures::Sqrt,
            ..Self::default()
        }
    }

    pub fn scaled_logistic(penalty: Penalty, c: f64) -> Self {
        Self {
            algorithm: Algorithm::ScaledLogistic,
            penalty,
            regularization_c: c,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidParams(m.to_string()));
        match self.algorithm {
            Algorithm::ScaledLogistic => {
                if !(self.regularization_c > 0.0 && self.regularization_c.is_finite()) {
                    return bad("regularization_c must be positive and finite");
                }
            }
            _ => {
                if self.n_estimators == 0 {
                    return bad("n_estimators must be positive");
                }
                if self.min_samples_split < 2 {
                    return bad("min_samples_split must be at least 2");
                }
                if self.max_bins < 2 || self.max_bins > u16::MAX as u32 {
                    return bad("max_bins must lie in [2, 65535]");
                }
            }
        }
        Ok(())
    }

    /// Short human-readable summary.
    pub fn describe(&self) -> String {
        match self.algorithm {
            Algorithm::ScaledLogistic => format!(
                "{} penalty={:?} C={}",
                self.algorithm.as_str(),
                self.penalty,
                self.regularization_c
            )
            .to_lowercase(),
            _ => format!(
                "{} n_estimators={} max_depth={} min_samples_split={}",
                self.algorithm.as_str(),
                self.n_estimators,
                self.max_depth.map_or("none".to_string(), |d| d.to_string()),
                self.min_samples_split
            ),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("dataset has {rows} rows and {labels} labels")]
    Shape { rows: usize, labels: usize },
    #[error("empty training set")]
    Empty,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("schema mismatch: model trained on {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("expected {expected} feature columns, got {found}")]
    Width { expected: usize, found: usize },
    #[error("ROC undefined: labels contain a single class")]
    SingleClass,
    #[error("unsupported model file version `{0}`")]
    Version(String),
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format error: {0}")]
    Format(#[from] serde_json::Error),
}

/// Row-major training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_cols: usize,
    pub x: Vec<f64>,
    pub y: Vec<bool>,
    pub schema_hash: String,
}

impl Dataset {
    pub fn new(x: Vec<f64>, n_cols: usize, y: Vec<bool>, schema_hash: impl Into<String>) -> Result<Self, LearnError> {
        if n_cols == 0 || x.len() != y.len() * n_cols {
            return Err(LearnError::Shape {
                rows: if n_cols == 0 { 0 } else { x.len() / n_cols },
                labels: y.len(),
            });
        }
        Ok(Self {
            n_cols,
            x,
            y,
            schema_hash: schema_hash.into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    fn check_finite(&self) -> Result<(), LearnError> {
        match self.x.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(LearnError::NonFinite {
                row: p / self.n_cols,
                col: p % self.n_cols,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    /// Mean of per-tree leaf scores.
    Trees { trees: Vec<Tree> },
    Logistic(LogisticState),
    /// Degenerate single-class model.
    Constant { score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: String,
    pub params: HyperParams,
    pub schema_hash: String,
    pub n_features: usize,
    pub split_id: Option<u32>,
    pub state: ModelState,
}

impl TrainedModel {
    fn new(params: &HyperParams, data: &Dataset, state: ModelState) -> Self {
        Self {
            version: MODEL_VERSION.to_string(),
            params: params.clone(),
            schema_hash: data.schema_hash.clone(),
            n_features: data.n_cols,
            split_id: None,
            state,
        }
    }

    /// Scores in `[0, 1]` for row-major `x` with `n_features` columns.
    pub fn predict_rows(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        if self.n_features == 0 || x.len() % self.n_features != 0 {
            return Err(LearnError::Width {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let rows = x.chunks_exact(self.n_features);
        Ok(match &self.state {
            ModelState::Constant { score } => rows.map(|_| *score).collect(),
            ModelState::Logistic(s) => rows.map(|r| s.predict(r)).collect(),
            ModelState::Trees { trees } => rows
                .map(|r| trees.iter().map(|t| t.predict(r)).sum::<f64>() / trees.len() as f64)
                .collect(),
        })
    }

    /// Scores for a feature matrix; refuses a matrix built from other specs.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
        self.check_schema(&m.schema_hash)?;
        if m.n_cols() != self.n_features {
            return Err(LearnError::Width {
                expected: self.n_features,
                found: m.n_cols(),
            });
        }
        self.predict_rows(&m.values)
    }

    pub fn check_schema(&self, schema_hash: &str) -> Result<(), LearnError> {
        if schema_hash != self.schema_hash {
            return Err(LearnError::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found: schema_hash.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(LearnError::Version(m.version));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn single_class(data: &Dataset) -> Option<f64> {
    let pos = data.y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == data.n_rows() {
        log::warn!("training labels contain a single class; fitting a constant model");
        Some(if pos == 0 { 0.0 } else { 1.0 })
    } else {
        None
    }
}

/// Trains the learner selected by `params.algorithm`.
pub fn train(data: &Dataset, params: &HyperParams) -> Result<TrainedModel, LearnError> {
    match params.algorithm {
        Algorithm::DecisionTree => train_tree(data, params),
        Algorithm::RandomForest => train_forest(data, params),
        Algorithm::ExtraTrees => train_extra(data, params),
        Algorithm::ScaledLogistic => train_scaled_logistic(data, params),
    }
}

fn prepare(data: &Dataset, params: &HyperParams) -> Result<Option<TrainedModel>, LearnError> {
    params.validate()?;
    if data.n_rows() == 0 {
        return Err(LearnError::Empty);
    }
    data.check_finite()?;
    Ok(single_class(data).map(|score| TrainedModel::new(params, data, ModelState::Constant { score })))
}

pub fn train_tree(data: &Dataset, params: &HyperParams) -> Result<TrainedModel, LearnError> {
    if let Some(m) = prepare(data, params)? {
        return Ok(m);
    }
    let p = HyperParams {
        n_estimators: 1,
        ..params.clone()
    };
    let trees = tree::grow_ensemble(data, &p, tree::Mode::Exhaustive, params.bootstrap.unwrap_or(false));
    Ok(TrainedModel::new(params, data, ModelState::Trees { trees }))
}

pub fn train_forest(data: &Dataset, params: &HyperParams) -> Result<TrainedModel, LearnError> {
    if let Some(m) = prepare(data, params)? {
        return Ok(m);
    }
    let trees = tree::grow_ensemble(data, params, tree::Mode::Exhaustive, params.bootstrap.unwrap_or(true));
    Ok(TrainedModel::new(params, data, ModelState::Trees { trees }))
}

pub fn train_extra(data: &Dataset, params: &HyperParams) -> Result<TrainedModel, LearnError> {
    if let Some(m) = prepare(data, params)? {
        return Ok(m);
    }
    let trees = tree::grow_ensemble(data, params, tree::Mode::RandomThreshold, params.bootstrap.unwrap_or(false));
    Ok(TrainedModel::new(params, data, ModelState::Trees { trees }))
}

pub fn train_scaled_logistic(data: &Dataset, params: &HyperParams) -> Result<TrainedModel, LearnError> {
    if let Some(m) = prepare(data, params)? {
        return Ok(m);
    }
    let state = logistic::fit(data, params.penalty, params.regularization_c);
    Ok(TrainedModel::new(params, data, ModelState::Logistic(state)))
}

#[cfg(test)]
mod tests;
