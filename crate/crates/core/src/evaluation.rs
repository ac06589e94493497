//! Ranking and thresholded metrics, stratified breakdowns, miss rate against
//! Bluetooth signal strength, and learning curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::models::{fit, Hyperparameters, Matrix, ModelKind, ThresholdClassifier};
use crate::rng::derive_seed;
use crate::stats::{average_ranks, percentile_sorted};

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney U over midranks).
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// Nothing was predicted positive; precision is reported as 0.
    pub no_positive_predictions: bool,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Prf {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            tp,
            fp,
            fn_,
            tn,
            no_positive_predictions: tp + fp == 0,
        }
    }
}

pub fn prf_at_threshold(scores: &[f64], labels: &[bool], classifier: &ThresholdClassifier) -> Prf {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (classifier.predict(s), l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Prf::from_counts(tp, fp, fn_, tn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub dimension: String,
    pub stratum: String,
    pub n: usize,
    pub positives: usize,
    /// `None` when the stratum holds a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissBin {
    /// Inclusive lower edge, dBm.
    pub lo: i32,
    /// Exclusive upper edge, dBm.
    pub hi: i32,
    pub positives: usize,
    pub missed: usize,
    pub miss_rate: Option<f64>,
}

impl MissBin {
    pub fn center(&self) -> f64 {
        f64::from(self.lo + self.hi) / 2.0
    }
}

pub const DEFAULT_RSSI_BIN_DB: i32 = 5;

/// Share of positives scored on the negative side of `classifier`, binned by
/// Bluetooth RSSI into right-open bins spanning the observed range.
pub fn miss_rate_vs_bt_rssi(
    scores: &[f64],
    bt_rssi: &[i32],
    classifier: &ThresholdClassifier,
    bin_db: i32,
) -> Result<Vec<MissBin>> {
    if bin_db <= 0 {
        return Err(Error::InvalidParameter("bin width must be positive".into()));
    }
    if scores.len() != bt_rssi.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: bt_rssi.len(),
        });
    }
    let Some((&lo, &hi)) = bt_rssi.iter().min().zip(bt_rssi.iter().max()) else {
        return Ok(Vec::new());
    };
    let first = lo.div_euclid(bin_db);
    let last = hi.div_euclid(bin_db);
    let mut bins: Vec<MissBin> = (first..=last)
        .map(|b| MissBin {
            lo: b * bin_db,
            hi: (b + 1) * bin_db,
            positives: 0,
            missed: 0,
            miss_rate: None,
        })
        .collect();
    for (&s, &r) in scores.iter().zip(bt_rssi) {
        let bin = &mut bins[(r.div_euclid(bin_db) - first) as usize];
        bin.positives += 1;
        if !classifier.predict(s) {
            bin.missed += 1;
        }
    }
    for b in &mut bins {
        if b.positives > 0 {
            b.miss_rate = Some(b.missed as f64 / b.positives as f64);
        }
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub positives: usize,
    pub auc: f64,
    pub classifier: ThresholdClassifier,
    pub prf: Prf,
    pub strata: Vec<StratumResult>,
    pub miss_rate_by_bt_rssi: Vec<MissBin>,
}

/// Row metadata used to form strata.
#[derive(Debug, Clone, Copy)]
pub struct StratumKeys {
    pub union: u32,
    pub at_campus: bool,
    pub ts: i64,
    pub hour_of_week: u32,
}

impl StratumKeys {
    pub fn of(v: &FeatureVector, ts: i64) -> Self {
        StratumKeys {
            union: v.union,
            at_campus: v.at_campus,
            ts,
            hour_of_week: v.hour_of_week,
        }
    }
}

fn stratum(dimension: &str, name: String, rows: &[usize], scores: &[f64], labels: &[bool]) -> StratumResult {
    let s: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
    let l: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();
    StratumResult {
        dimension: dimension.to_string(),
        stratum: name,
        n: rows.len(),
        positives: l.iter().filter(|&&b| b).count(),
        auc: auc_roc(&s, &l).ok(),
    }
}

/// Union-size terciles by rank (ties broken by row order), so the three
/// groups differ in size by at most one.
pub fn union_terciles(unions: &[u32]) -> Vec<usize> {
    let n = unions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (unions[i], i));
    let mut tercile = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        tercile[i] = rank * 3 / n.max(1);
    }
    tercile
}

pub fn strata_breakdown(scores: &[f64], labels: &[bool], keys: &[StratumKeys], tz_offset_s: i32) -> Vec<StratumResult> {
    let mut out = Vec::new();

    let terciles = union_terciles(&keys.iter().map(|k| k.union).collect::<Vec<_>>());
    for (t, name) in ["low", "mid", "high"].iter().enumerate() {
        let rows: Vec<usize> = (0..keys.len()).filter(|&i| terciles[i] == t).collect();
        let (lo, hi) = rows
            .iter()
            .map(|&i| keys[i].union)
            .fold((u32::MAX, 0), |(a, b), u| (a.min(u), b.max(u)));
        let label = if rows.is_empty() {
            name.to_string()
        } else {
            format!("{name} [{lo},{hi}]")
        };
        out.push(stratum("union_tercile", label, &rows, scores, labels));
    }

    let mut group = |dimension: &str, key: &dyn Fn(&StratumKeys) -> String| {
        let mut by: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            by.entry(key(k)).or_default().push(i);
        }
        for (name, rows) in by {
            out.push(stratum(dimension, name, &rows, scores, labels));
        }
    };
    group("at_campus", &|k| u8::from(k.at_campus).to_string());
    group("week", &|k| {
        let (y, w) = crate::time::iso_week(k.ts, tz_offset_s);
        format!("{y}-W{w:02}")
    });
    group("hour_of_week", &|k| format!("{:03}", k.hour_of_week));
    out
}

/// Full report for one evaluated score column. `bt_rssi` holds the
/// supporting sighting strength of each positive row (ignored for negatives).
pub fn stratified_report(
    scores: &[f64],
    labels: &[bool],
    keys: &[StratumKeys],
    bt_rssi: &[Option<i32>],
    classifier: &ThresholdClassifier,
    tz_offset_s: i32,
) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation set".into()));
    }
    for len in [labels.len(), keys.len(), bt_rssi.len()] {
        if len != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                actual: len,
            });
        }
    }
    let (pos_scores, pos_rssi): (Vec<f64>, Vec<i32>) = (0..scores.len())
        .filter(|&i| labels[i])
        .filter_map(|i| bt_rssi[i].map(|r| (scores[i], r)))
        .unzip();
    Ok(EvalReport {
        n: scores.len(),
        positives: labels.iter().filter(|&&l| l).count(),
        auc: auc_roc(scores, labels)?,
        classifier: classifier.clone(),
        prf: prf_at_threshold(scores, labels, classifier),
        strata: strata_breakdown(scores, labels, keys, tz_offset_s),
        miss_rate_by_bt_rssi: miss_rate_vs_bt_rssi(&pos_scores, &pos_rssi, classifier, DEFAULT_RSSI_BIN_DB)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub kind: ModelKind,
    pub size: usize,
    pub aucs: Vec<f64>,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

pub struct LearningCurveSpec<'a> {
    pub sizes: &'a [usize],
    pub repetitions: usize,
    pub models: &'a [(ModelKind, Hyperparameters)],
    pub seed: u64,
}

/// Test AUC for repeated random subsamples of the training pool at each
/// size. Every repetition draws its own subsample and model seed.
pub fn learning_curve(
    pool_x: &Matrix,
    pool_y: &[bool],
    test_x: &Matrix,
    test_y: &[bool],
    spec: &LearningCurveSpec<'_>,
) -> Result<Vec<CurvePoint>> {
    if let Some(&too_big) = spec.sizes.iter().find(|&&s| s > pool_y.len()) {
        return Err(Error::SampleTooLarge {
            requested: too_big,
            available: pool_y.len(),
        });
    }
    if spec.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be positive".into()));
    }
    let mut out = Vec::new();
    for &(kind, hp) in spec.models {
        for (si, &size) in spec.sizes.iter().enumerate() {
            // Boosting has no randomness of its own, so full-pool repetitions coincide.
            let distinct = if size == pool_y.len() && kind == ModelKind::GradientBoosted {
                1
            } else {
                spec.repetitions
            };
            let runs = crate::par::map_indexed(distinct, |rep| -> Result<f64> {
                let seed = derive_seed(spec.seed, (si * 100_000 + rep) as u64);
                let (rows, _) = crate::pairing::split_train_test(pool_y.len(), size, seed)?;
                let x = pool_x.select_rows(&rows);
                let y: Vec<bool> = rows.iter().map(|&i| pool_y[i]).collect();
                let model = fit(kind, &x, &y, &hp, derive_seed(seed, 1))?;
                auc_roc(&model.predict(test_x)?, test_y)
            });
            let mut aucs = runs.into_iter().collect::<Result<Vec<f64>>>()?;
            let first = aucs[0];
            aucs.resize(spec.repetitions, first);
            let mut sorted = aucs.clone();
            sorted.sort_by(f64::total_cmp);
            out.push(CurvePoint {
                kind,
                size,
                median: percentile_sorted(&sorted, 50.0),
                p25: percentile_sorted(&sorted, 25.0),
                p75: percentile_sorted(&sorted, 75.0),
                aucs,
            });
        }
    }
    Ok(out)
}
