//! Single-feature threshold classifiers and tree ensembles.

mod cv;
mod ensemble;
mod featureset;
mod matrix;
mod threshold;
mod tree;

pub use cv::{grid_search_cv, stratified_folds, CvResult, GridPoint, DEFAULT_FOLDS};
pub use ensemble::{
    default_grid, fit, fit_gbt, fit_rf, Hyperparameters, MaxFeatures, ModelKind, TreeEnsemble, TreeEnsembleModel,
    MODEL_SCHEMA_VERSION,
};
pub use featureset::FeatureSet;
pub use matrix::Matrix;
pub use threshold::{f1_score, fit_threshold, Direction, ThresholdClassifier};
pub use tree::{fit_decision_tree, DecisionTree};
