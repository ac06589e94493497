//! The sixteen pairwise features computed for each candidate pair, and the
//! mean imputation applied to the two correlation features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::HomeRouterMap;
use crate::model::{intersect, Bssid, CandidatePair, OverlapView, UserId, WifiScanRecord};
use crate::stats;
use crate::time::{hour_of_week, MonthKey};

pub const NUM_FEATURES: usize = 16;

/// Canonical feature order used by every file format and model.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "overlap",
    "non_overlap",
    "union",
    "jaccard",
    "spearman",
    "pearson",
    "manhattan",
    "euclidean",
    "top_ap",
    "top_ap_6db",
    "hour_of_week",
    "min_popularity",
    "max_popularity",
    "adamic_adar",
    "at_home",
    "at_campus",
];

pub const SPEARMAN: usize = 4;
pub const PEARSON: usize = 5;

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&n| n == name)
}

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_TOP_AP_TOLERANCE_DB: i32 = 6;
pub const DEFAULT_POPULARITY_WINDOW_S: i64 = 300;
pub const DEFAULT_CAMPUS_MARKER: &str = "dtu";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub overlap: u32,
    pub non_overlap: u32,
    pub union: u32,
    pub jaccard: f64,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub manhattan: f64,
    pub euclidean: f64,
    pub top_ap: bool,
    pub top_ap_6db: bool,
    pub hour_of_week: u32,
    pub min_popularity: u32,
    pub max_popularity: u32,
    pub adamic_adar: f64,
    pub at_home: bool,
    pub at_campus: bool,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl FeatureVector {
    /// Values in canonical order; correlations are `None` when missing.
    pub fn values(&self) -> [Option<f64>; NUM_FEATURES] {
        [
            Some(f64::from(self.overlap)),
            Some(f64::from(self.non_overlap)),
            Some(f64::from(self.union)),
            Some(self.jaccard),
            self.spearman,
            self.pearson,
            Some(self.manhattan),
            Some(self.euclidean),
            Some(flag(self.top_ap)),
            Some(flag(self.top_ap_6db)),
            Some(f64::from(self.hour_of_week)),
            Some(f64::from(self.min_popularity)),
            Some(f64::from(self.max_popularity)),
            Some(self.adamic_adar),
            Some(flag(self.at_home)),
            Some(flag(self.at_campus)),
        ]
    }

    /// Inverse of [`values`](Self::values). Integer and binary slots must hold
    /// exact non-negative integers.
    pub fn from_values(v: &[Option<f64>; NUM_FEATURES]) -> Result<Self> {
        let req = |i: usize| v[i].ok_or_else(|| Error::InvalidRecord(format!("missing `{}`", FEATURE_NAMES[i])));
        let int = |i: usize| -> Result<u32> {
            let x = req(i)?;
            if x < 0.0 || x.fract() != 0.0 || x > f64::from(u32::MAX) {
                return Err(Error::InvalidRecord(format!(
                    "`{}` must be a non-negative integer, got {x}",
                    FEATURE_NAMES[i]
                )));
            }
            Ok(x as u32)
        };
        let bin = |i: usize| -> Result<bool> {
            match int(i)? {
                0 => Ok(false),
                1 => Ok(true),
                x => Err(Error::InvalidRecord(format!(
                    "`{}` must be 0 or 1, got {x}",
                    FEATURE_NAMES[i]
                ))),
            }
        };
        Ok(FeatureVector {
            overlap: int(0)?,
            non_overlap: int(1)?,
            union: int(2)?,
            jaccard: req(3)?,
            spearman: v[4],
            pearson: v[5],
            manhattan: req(6)?,
            euclidean: req(7)?,
            top_ap: bin(8)?,
            top_ap_6db: bin(9)?,
            hour_of_week: int(10)?,
            min_popularity: int(11)?,
            max_popularity: int(12)?,
            adamic_adar: req(13)?,
            at_home: bin(14)?,
            at_campus: bin(15)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApPresence {
    pub overlap: u32,
    pub non_overlap: u32,
    pub union: u32,
    pub jaccard: f64,
}

pub fn ap_presence(view: &OverlapView) -> ApPresence {
    let overlap = view.common.len() as u32;
    let union = view.union_len() as u32;
    ApPresence {
        overlap,
        non_overlap: union - overlap,
        union,
        jaccard: if union == 0 {
            0.0
        } else {
            f64::from(overlap) / f64::from(union)
        },
    }
}

fn common_rssi(view: &OverlapView) -> (Vec<f64>, Vec<f64>) {
    view.common
        .iter()
        .map(|c| (f64::from(c.rssi_a), f64::from(c.rssi_b)))
        .unzip()
}

/// Spearman and Pearson correlation of the common routers' RSSI readings.
///
/// A coefficient is missing with fewer than three common routers, when
/// either side reads every router at the same level, or when its p-value is
/// not below `alpha`.
pub fn rssi_correlations(view: &OverlapView, alpha: f64) -> (Option<f64>, Option<f64>) {
    let (a, b) = common_rssi(view);
    let significant = |c: Option<stats::Correlation>| c.filter(|c| c.p_value < alpha).map(|c| c.r);
    (
        significant(stats::spearman(&a, &b)),
        significant(stats::pearson(&a, &b)),
    )
}

/// Mean absolute RSSI difference and the L2 norm of differences divided by
/// the number of common routers. Both are zero without common routers.
pub fn rssi_distances(view: &OverlapView) -> (f64, f64) {
    if view.common.is_empty() {
        return (0.0, 0.0);
    }
    let n = view.common.len() as f64;
    let (l1, l2sq) = view.common.iter().fold((0.0, 0.0), |(l1, l2), c| {
        let d = f64::from(c.rssi_a - c.rssi_b);
        (l1 + d.abs(), l2 + d * d)
    });
    (l1 / n, l2sq.sqrt() / n)
}

/// `(top_ap, top_ap_within_tolerance)`.
///
/// The first is set when some router is the strongest (ties allowed) in both
/// scans; the second when some common router is within `tolerance_db` of
/// each scan's own strongest reading.
pub fn top_ap_features(scan_a: &WifiScanRecord, scan_b: &WifiScanRecord, tolerance_db: i32) -> (bool, bool) {
    let (Some(max_a), Some(max_b)) = (scan_a.max_rssi(), scan_b.max_rssi()) else {
        return (false, false);
    };
    let view = intersect(scan_a, scan_b);
    let top = view.common.iter().any(|c| c.rssi_a == max_a && c.rssi_b == max_b);
    let near = view
        .common
        .iter()
        .any(|c| c.rssi_a >= max_a - tolerance_db && c.rssi_b >= max_b - tolerance_db);
    (top, near)
}

/// Per-router record of which users scanned it and when.
#[derive(Debug, Clone, Default)]
pub struct PopularityIndex {
    users: HashMap<UserId, u32>,
    /// Sorted by (ts, user).
    sightings: HashMap<Bssid, Vec<(i64, u32)>>,
}

impl PopularityIndex {
    pub fn build(records: &[WifiScanRecord]) -> Self {
        let mut index = PopularityIndex::default();
        for rec in records {
            let next = index.users.len() as u32;
            let uid = *index.users.entry(rec.user().clone()).or_insert(next);
            for ap in rec.aps() {
                index.sightings.entry(ap.bssid).or_default().push((rec.ts(), uid));
            }
        }
        for list in index.sightings.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        index
    }

    /// Distinct users who scanned `bssid` within `[ts - window_s, ts + window_s]`.
    pub fn popularity(&self, bssid: Bssid, ts: i64, window_s: i64) -> usize {
        let Some(list) = self.sightings.get(&bssid) else {
            return 0;
        };
        let lo = list.partition_point(|&(t, _)| t < ts - window_s);
        let hi = list.partition_point(|&(t, _)| t <= ts + window_s);
        let mut users: Vec<u32> = list[lo..hi].iter().map(|&(_, u)| u).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityFeatures {
    pub min_popularity: u32,
    pub max_popularity: u32,
    pub adamic_adar: f64,
}

/// Min and max popularity over the common routers, and the Adamic-Adar sum
/// of `1 / ln(popularity)`.
///
/// Both members of a candidate scanned every common router, so a popularity
/// below two means the index was built from different data.
pub fn popularity_features(
    view: &OverlapView,
    ts: i64,
    index: &PopularityIndex,
    window_s: i64,
) -> Result<PopularityFeatures> {
    let mut out = PopularityFeatures {
        min_popularity: 0,
        max_popularity: 0,
        adamic_adar: 0.0,
    };
    for (i, c) in view.common.iter().enumerate() {
        let pop = index.popularity(c.bssid, ts, window_s);
        if pop < 2 {
            return Err(Error::IndexInconsistency {
                bssid: c.bssid.to_string(),
                popularity: pop,
            });
        }
        let pop32 = pop as u32;
        if i == 0 {
            out.min_popularity = pop32;
            out.max_popularity = pop32;
        } else {
            out.min_popularity = out.min_popularity.min(pop32);
            out.max_popularity = out.max_popularity.max(pop32);
        }
        out.adamic_adar += 1.0 / (pop as f64).ln();
    }
    Ok(out)
}

/// `(hour_of_week, at_home, at_campus)`.
pub fn timing_location_features(
    pair: &CandidatePair,
    scan_a: &WifiScanRecord,
    scan_b: &WifiScanRecord,
    homes: &HomeRouterMap,
    campus_marker: &str,
    tz_offset_s: i32,
) -> (u32, bool, bool) {
    let how = hour_of_week(pair.ts, tz_offset_s);
    let month = MonthKey::of(pair.ts, tz_offset_s);
    let home_a = homes.get(&pair.user_a, month);
    let home_b = homes.get(&pair.user_b, month);
    let union = || scan_a.aps().iter().chain(scan_b.aps());
    let at_home = union().any(|ap| Some(ap.bssid) == home_a || Some(ap.bssid) == home_b);
    let at_campus = union().any(|ap| ap.ssid == campus_marker);
    (how, at_home, at_campus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub alpha: f64,
    pub top_ap_tolerance_db: i32,
    pub popularity_window_s: i64,
    pub campus_marker: String,
    pub tz_offset_s: i32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            alpha: DEFAULT_ALPHA,
            top_ap_tolerance_db: DEFAULT_TOP_AP_TOLERANCE_DB,
            popularity_window_s: DEFAULT_POPULARITY_WINDOW_S,
            campus_marker: DEFAULT_CAMPUS_MARKER.to_string(),
            tz_offset_s: 0,
        }
    }
}

/// Everything feature extraction reads besides the pair itself.
pub struct FeatureContext<'a> {
    pub scans: &'a [WifiScanRecord],
    pub popularity: &'a PopularityIndex,
    pub homes: &'a HomeRouterMap,
    pub config: &'a FeatureConfig,
}

pub fn extract(pair: &CandidatePair, ctx: &FeatureContext<'_>) -> Result<FeatureVector> {
    let scan_a = &ctx.scans[pair.scan_a];
    let scan_b = &ctx.scans[pair.scan_b];
    let view = intersect(scan_a, scan_b);
    let presence = ap_presence(&view);
    let (spearman, pearson) = rssi_correlations(&view, ctx.config.alpha);
    let (manhattan, euclidean) = rssi_distances(&view);
    let (top_ap, top_ap_6db) = top_ap_features(scan_a, scan_b, ctx.config.top_ap_tolerance_db);
    let pop = popularity_features(&view, pair.ts, ctx.popularity, ctx.config.popularity_window_s)?;
    let (hour_of_week, at_home, at_campus) = timing_location_features(
        pair,
        scan_a,
        scan_b,
        ctx.homes,
        &ctx.config.campus_marker,
        ctx.config.tz_offset_s,
    );
    Ok(FeatureVector {
        overlap: presence.overlap,
        non_overlap: presence.non_overlap,
        union: presence.union,
        jaccard: presence.jaccard,
        spearman,
        pearson,
        manhattan,
        euclidean,
        top_ap,
        top_ap_6db,
        hour_of_week,
        min_popularity: pop.min_popularity,
        max_popularity: pop.max_popularity,
        adamic_adar: pop.adamic_adar,
        at_home,
        at_campus,
    })
}

pub fn extract_all(pairs: &[CandidatePair], ctx: &FeatureContext<'_>) -> Result<Vec<FeatureVector>> {
    crate::par::map_slice(pairs, |p| extract(p, ctx)).into_iter().collect()
}

/// Training-set means that replace missing correlation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationState {
    pub spearman_mean: f64,
    pub pearson_mean: f64,
    pub train_rows: usize,
    pub spearman_missing: usize,
    pub pearson_missing: usize,
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => missing += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), missing)
}

pub fn fit_imputation(train: &[FeatureVector]) -> Result<ImputationState> {
    let (spearman, spearman_missing) = mean_present(train.iter().map(|v| v.spearman));
    let (pearson, pearson_missing) = mean_present(train.iter().map(|v| v.pearson));
    Ok(ImputationState {
        spearman_mean: spearman.ok_or(Error::AllMissing { feature: "spearman" })?,
        pearson_mean: pearson.ok_or(Error::AllMissing { feature: "pearson" })?,
        train_rows: train.len(),
        spearman_missing,
        pearson_missing,
    })
}

pub type ImputedRow = [f64; NUM_FEATURES];

impl ImputationState {
    pub fn impute(&self, v: &FeatureVector) -> ImputedRow {
        let values = v.values();
        let mut row = [0.0; NUM_FEATURES];
        for (i, x) in values.iter().enumerate() {
            row[i] = match (x, i) {
                (Some(x), _) => *x,
                (None, SPEARMAN) => self.spearman_mean,
                (None, PEARSON) => self.pearson_mean,
                (None, _) => unreachable!("only correlations can be missing"),
            };
        }
        row
    }
}

pub fn apply_imputation(vectors: &[FeatureVector], state: &ImputationState) -> Vec<ImputedRow> {
    vectors.iter().map(|v| state.impute(v)).collect()
}
