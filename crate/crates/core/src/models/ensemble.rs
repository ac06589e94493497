use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::featureset::FeatureSet;
use super::matrix::Matrix;
use super::threshold::ThresholdClassifier;
use super::tree::{grow, presort, DecisionTree, GrowParams};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, ImputationState};
use crate::rng::stream_rng;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "gbt")]
    GradientBoosted,
    #[serde(rename = "rf")]
    RandomForest,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GradientBoosted => "gbt",
            ModelKind::RandomForest => "rf",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt" => Ok(ModelKind::GradientBoosted),
            "rf" => Ok(ModelKind::RandomForest),
            _ => Err(Error::InvalidParameter(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
}

impl MaxFeatures {
    fn count(self, d: usize) -> Option<usize> {
        match self {
            MaxFeatures::All => None,
            MaxFeatures::Sqrt => Some(((d as f64).sqrt() as usize).max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// Boosting only.
    pub learning_rate: f64,
    /// Forest only.
    pub max_features: MaxFeatures,
    /// Forest only.
    pub bootstrap: bool,
}

impl Hyperparameters {
    pub fn gbt(n_trees: usize, max_depth: usize, learning_rate: f64) -> Self {
        Hyperparameters {
            n_trees,
            max_depth: Some(max_depth),
            learning_rate,
            max_features: MaxFeatures::All,
            bootstrap: false,
        }
    }

    pub fn rf(n_trees: usize, max_depth: Option<usize>) -> Self {
        Hyperparameters {
            n_trees,
            max_depth,
            learning_rate: 1.0,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParameter("max_depth must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Default search grids, in tie-break order.
pub fn default_grid(kind: ModelKind) -> Vec<Hyperparameters> {
    let mut grid = Vec::new();
    match kind {
        ModelKind::GradientBoosted => {
            for trees in [50, 100, 200] {
                for depth in [2, 3, 4] {
                    for lr in [0.05, 0.1] {
                        grid.push(Hyperparameters::gbt(trees, depth, lr));
                    }
                }
            }
        }
        ModelKind::RandomForest => {
            for trees in [100, 300] {
                for depth in [None, Some(8)] {
                    grid.push(Hyperparameters::rf(trees, depth));
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub n_features: usize,
    /// Log-odds starting point for boosting; unused by forests.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<DecisionTree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_training(x: &Matrix, y: &[bool], hp: &Hyperparameters) -> Result<(usize, usize)> {
    hp.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    if x.n_cols() == 0 {
        return Err(Error::InvalidParameter("no feature columns".into()));
    }
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok((pos, y.len() - pos))
}

/// Gradient boosting with logistic loss. Each stage fits a regression tree to
/// the negative gradient and sets leaf values by a Newton step.
pub fn fit_gbt(x: &Matrix, y: &[bool], hp: &Hyperparameters, seed: u64) -> Result<TreeEnsemble> {
    let (pos, neg) = check_training(x, y, hp)?;
    let base_score = (pos as f64 / neg as f64).ln();
    let order = presort(x);
    let n = x.n_rows();
    let target: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let ones = vec![1.0; n];
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let params = GrowParams {
        max_depth: hp.max_depth,
        max_features: None,
        impurity_scale: 1.0,
    };
    let mut trees = Vec::with_capacity(hp.n_trees);
    for _ in 0..hp.n_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = target[i] - p;
            hess[i] = p * (1.0 - p);
        }
        let tree = grow(x, order.clone(), &grad, &ones, params, None, |idx| {
            let (mut g, mut h) = (0.0, 0.0);
            for &i in idx {
                g += grad[i as usize];
                h += hess[i as usize];
            }
            if h.abs() < 1e-150 {
                0.0
            } else {
                g / h
            }
        });
        for (i, r) in raw.iter_mut().enumerate() {
            *r += hp.learning_rate * tree.predict_row(x, i);
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        kind: ModelKind::GradientBoosted,
        hyperparameters: *hp,
        seed,
        n_features: x.n_cols(),
        base_score,
        learning_rate: hp.learning_rate,
        trees,
    })
}

/// Random forest of Gini trees. Tree `t` draws its bootstrap sample and
/// feature subsets from its own stream derived from `(seed, t)`, so a forest
/// is a prefix of any larger forest with the same seed.
pub fn fit_rf(x: &Matrix, y: &[bool], hp: &Hyperparameters, seed: u64) -> Result<TreeEnsemble> {
    check_training(x, y, hp)?;
    let n = x.n_rows();
    let order = presort(x);
    let target: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let params = GrowParams {
        max_depth: hp.max_depth,
        max_features: hp.max_features.count(x.n_cols()),
        impurity_scale: 2.0,
    };
    let trees = crate::par::map_indexed(hp.n_trees, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let mut w = vec![0.0; n];
        if hp.bootstrap {
            use rand::Rng;
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1.0;
            }
        } else {
            w.fill(1.0);
        }
        let tree_order: Vec<Vec<u32>> = order
            .iter()
            .map(|o| o.iter().copied().filter(|&i| w[i as usize] > 0.0).collect())
            .collect();
        grow(x, tree_order, &target, &w, params, Some(&mut rng), |idx| {
            let (mut sw, mut sy) = (0.0, 0.0);
            for &i in idx {
                sw += w[i as usize];
                sy += w[i as usize] * target[i as usize];
            }
            sy / sw
        })
    });
    Ok(TreeEnsemble {
        kind: ModelKind::RandomForest,
        hyperparameters: *hp,
        seed,
        n_features: x.n_cols(),
        base_score: 0.0,
        learning_rate: 1.0,
        trees,
    })
}

pub fn fit(kind: ModelKind, x: &Matrix, y: &[bool], hp: &Hyperparameters, seed: u64) -> Result<TreeEnsemble> {
    match kind {
        ModelKind::GradientBoosted => fit_gbt(x, y, hp, seed),
        ModelKind::RandomForest => fit_rf(x, y, hp, seed),
    }
}

impl TreeEnsemble {
    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.n_cols(),
            });
        }
        Ok(())
    }

    /// Probabilities from the first `k` trees for each `k` in `stages`
    /// (ascending). Identical to predicting with a model trained with `k` trees.
    pub fn predict_staged(&self, x: &Matrix, stages: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_width(x)?;
        if stages.windows(2).any(|w| w[0] > w[1]) || stages.last().is_some_and(|&s| s > self.trees.len()) {
            return Err(Error::InvalidParameter(
                "stages must be ascending and within the ensemble".into(),
            ));
        }
        let rows = crate::par::map_indexed(x.n_rows(), |i| {
            let mut out = Vec::with_capacity(stages.len());
            let mut acc = 0.0;
            let mut t = 0;
            for &k in stages {
                while t < k {
                    acc += self.trees[t].predict_row(x, i);
                    t += 1;
                }
                out.push(self.finish(acc, k));
            }
            out
        });
        Ok((0..stages.len()).map(|s| rows.iter().map(|r| r[s]).collect()).collect())
    }

    fn finish(&self, sum: f64, k: usize) -> f64 {
        match self.kind {
            ModelKind::GradientBoosted => sigmoid(self.base_score + self.learning_rate * sum),
            ModelKind::RandomForest => sum / k as f64,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_staged(x, &[self.trees.len()])?.remove(0))
    }

    /// Impurity decrease weighted by node reach probability, averaged over
    /// trees and normalized to sum to one. All zeros if no tree ever splits.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for tree in &self.trees {
            for (t, v) in total.iter_mut().zip(tree.impurity_decrease(self.n_features)) {
                *t += v;
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|v| *v /= sum);
        }
        total
    }
}

/// Trained ensemble bundled with everything needed to score raw feature
/// vectors: column selection and the imputation means from training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub featureset: FeatureSet,
    pub feature_names: Vec<String>,
    pub imputation: ImputationState,
    pub ensemble: TreeEnsemble,
    /// F1-optimal cutoff on the training scores, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_point: Option<ThresholdClassifier>,
}

impl TreeEnsembleModel {
    pub fn new(ensemble: TreeEnsemble, featureset: FeatureSet, imputation: ImputationState) -> Result<Self> {
        let names = featureset.feature_names();
        if names.len() != ensemble.n_features {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                actual: ensemble.n_features,
            });
        }
        Ok(TreeEnsembleModel {
            schema_version: MODEL_SCHEMA_VERSION,
            config_hash: None,
            featureset,
            feature_names: names,
            imputation,
            ensemble,
            operating_point: None,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.ensemble.kind
    }

    /// Scores raw vectors: imputes missing correlations with the stored
    /// training means, then selects the featureset's columns.
    pub fn predict(&self, vectors: &[FeatureVector]) -> Result<Vec<f64>> {
        let rows = crate::features::apply_imputation(vectors, &self.imputation);
        let x = Matrix::from_imputed(&rows, &self.featureset.columns())?;
        self.ensemble.predict(&x)
    }

    /// Scores rows that already hold exactly the model's columns.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let x = Matrix::from_rows(rows, self.feature_names.len())?;
        self.ensemble.predict(&x)
    }

    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        self.feature_names
            .iter()
            .cloned()
            .zip(self.ensemble.feature_importances())
            .collect()
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let model: TreeEnsembleModel = serde_json::from_reader(reader)?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.feature_names != self.featureset.feature_names() {
            return Err(Error::Schema("feature names do not match featureset".into()));
        }
        let d = self.feature_names.len();
        if self.ensemble.n_features != d || self.ensemble.trees.iter().any(|t| !t.check(d)) {
            return Err(Error::Schema("malformed tree arrays".into()));
        }
        Ok(())
    }
}
