//! In-memory stage functions shared by the command-line tool and the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{auc_roc, prf_at_threshold, Prf};
use crate::features::{
    apply_imputation, extract_all, fit_imputation, FeatureConfig, FeatureContext, FeatureVector, ImputationState,
    PopularityIndex, FEATURE_NAMES,
};
use crate::ingest::{filter_ambiguous_macs, BluetoothScanLine, CleaningReport, HomeRouterMap};
use crate::model::{BluetoothSighting, CandidatePair, WifiScanRecord};
use crate::models::{
    fit, fit_threshold, grid_search_cv, CvResult, FeatureSet, Hyperparameters, Matrix, ModelKind, ThresholdClassifier,
    TreeEnsembleModel,
};
use crate::pairing::{build_candidates, split_train_test};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub max_ssids: usize,
    pub home_bin_minutes: u32,
    pub delta_t: i64,
    pub features: FeatureConfig,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            max_ssids: crate::ingest::DEFAULT_MAX_SSIDS,
            home_bin_minutes: crate::ingest::DEFAULT_HOME_BIN_MINUTES,
            delta_t: crate::pairing::DEFAULT_DELTA_T,
            features: FeatureConfig::default(),
        }
    }
}

pub fn flatten_bluetooth(lines: &[BluetoothScanLine]) -> Vec<BluetoothSighting> {
    lines
        .iter()
        .flat_map(|l| {
            l.seen.iter().map(|d| BluetoothSighting {
                user: l.user.clone(),
                ts: l.ts,
                peer: d.peer.clone(),
                mac: d.mac,
                rssi: d.rssi,
            })
        })
        .collect()
}

pub struct Prepared {
    pub scans: Vec<WifiScanRecord>,
    pub cleaning: CleaningReport,
    pub homes: HomeRouterMap,
    pub candidates: Vec<CandidatePair>,
    pub features: Vec<FeatureVector>,
}

pub fn clean(
    scans: Vec<WifiScanRecord>,
    cfg: &PrepConfig,
) -> Result<(Vec<WifiScanRecord>, CleaningReport, HomeRouterMap)> {
    let (scans, cleaning) = filter_ambiguous_macs(scans, cfg.max_ssids)?;
    let homes = HomeRouterMap::build(&scans, cfg.home_bin_minutes, cfg.features.tz_offset_s);
    Ok((scans, cleaning, homes))
}

pub fn featurize(
    scans: &[WifiScanRecord],
    homes: &HomeRouterMap,
    candidates: &[CandidatePair],
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureVector>> {
    let popularity = PopularityIndex::build(scans);
    let ctx = FeatureContext {
        scans,
        popularity: &popularity,
        homes,
        config: cfg,
    };
    extract_all(candidates, &ctx)
}

/// Clean, detect homes, pair and featurize in one pass.
pub fn prepare(scans: Vec<WifiScanRecord>, sightings: &[BluetoothSighting], cfg: &PrepConfig) -> Result<Prepared> {
    let (scans, cleaning, homes) = clean(scans, cfg)?;
    let candidates = build_candidates(&scans, sightings, cfg.delta_t);
    let features = featurize(&scans, &homes, &candidates, &cfg.features)?;
    Ok(Prepared {
        scans,
        cleaning,
        homes,
        candidates,
        features,
    })
}

pub fn labels(candidates: &[CandidatePair]) -> Vec<bool> {
    candidates.iter().map(CandidatePair::is_positive).collect()
}

/// Fixed test set plus a training sample drawn from the remaining pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Holdout {
    pub pool: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Reserves `round(n * holdout_fraction)` rows for testing, then samples
/// `train_size` training rows (capped at the pool size) from the rest.
pub fn holdout(n: usize, holdout_fraction: f64, train_size: usize, seed: u64) -> Result<Holdout> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidParameter("holdout fraction must lie in (0, 1)".into()));
    }
    let n_test = (n as f64 * holdout_fraction).round() as usize;
    let (pool, test) = split_train_test(n, n - n_test, derive_seed(seed, 0x701d))?;
    let (picked, _) = split_train_test(pool.len(), train_size.min(pool.len()), derive_seed(seed, 0x7a1e))?;
    let train = picked.into_iter().map(|i| pool[i]).collect();
    Ok(Holdout { pool, train, test })
}

pub fn pick_rows<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Training and test rows with imputation fitted on the training rows only.
pub struct Split {
    pub imputation: ImputationState,
    pub train_x: Vec<crate::features::ImputedRow>,
    pub train_y: Vec<bool>,
    pub test_x: Vec<crate::features::ImputedRow>,
    pub test_y: Vec<bool>,
}

pub fn split_rows(features: &[FeatureVector], labels: &[bool], train: &[usize], test: &[usize]) -> Result<Split> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    let train_v = pick_rows(features, train);
    let imputation = fit_imputation(&train_v)?;
    Ok(Split {
        train_x: apply_imputation(&train_v, &imputation),
        train_y: pick_rows(labels, train),
        test_x: apply_imputation(&pick_rows(features, test), &imputation),
        test_y: pick_rows(labels, test),
        imputation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleFeatureResult {
    pub classifier: ThresholdClassifier,
    pub train_auc: f64,
    pub test_auc: f64,
    pub train: Prf,
    pub test: Prf,
}

/// Threshold classifier per feature, fitted on training rows. AUC is taken
/// on the score oriented by the fitted direction.
pub fn single_feature_results(split: &Split) -> Result<Vec<SingleFeatureResult>> {
    (0..FEATURE_NAMES.len())
        .map(|j| {
            let tr: Vec<f64> = split.train_x.iter().map(|r| r[j]).collect();
            let te: Vec<f64> = split.test_x.iter().map(|r| r[j]).collect();
            let c = fit_threshold(FEATURE_NAMES[j], &tr, &split.train_y)?;
            let orient = |v: &[f64]| v.iter().map(|&s| c.oriented(s)).collect::<Vec<_>>();
            Ok(SingleFeatureResult {
                train_auc: auc_roc(&orient(&tr), &split.train_y)?,
                test_auc: auc_roc(&orient(&te), &split.test_y)?,
                train: prf_at_threshold(&tr, &split.train_y, &c),
                test: prf_at_threshold(&te, &split.test_y, &c),
                classifier: c,
            })
        })
        .collect()
}

pub struct TrainOutcome {
    pub model: TreeEnsembleModel,
    pub cv: Option<CvResult>,
}

pub enum Tuning<'a> {
    Grid { grid: &'a [Hyperparameters], folds: usize },
    Fixed(Hyperparameters),
}

pub fn train_featureset(
    split: &Split,
    featureset: FeatureSet,
    kind: ModelKind,
    tuning: Tuning<'_>,
    seed: u64,
) -> Result<TrainOutcome> {
    let x = Matrix::from_imputed(&split.train_x, &featureset.columns())?;
    let (hp, cv) = match tuning {
        Tuning::Grid { grid, folds } => {
            let cv = grid_search_cv(kind, &x, &split.train_y, grid, folds, seed)?;
            (cv.best(), Some(cv))
        }
        Tuning::Fixed(hp) => (hp, None),
    };
    let ensemble = fit(kind, &x, &split.train_y, &hp, seed)?;
    let train_scores = ensemble.predict(&x)?;
    let mut model = TreeEnsembleModel::new(ensemble, featureset, split.imputation.clone())?;
    model.operating_point = Some(fit_threshold("score", &train_scores, &split.train_y)?);
    Ok(TrainOutcome { model, cv })
}

pub fn score_rows(model: &TreeEnsembleModel, rows: &[crate::features::ImputedRow]) -> Result<Vec<f64>> {
    let x = Matrix::from_imputed(rows, &model.featureset.columns())?;
    model.ensemble.predict(&x)
}
