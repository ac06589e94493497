//! WebAssembly bindings behind `www/index.html`.
//!
//! Each export takes plain strings or numbers and returns a JSON string. The
//! same operations are available natively as `Result<String, String>` so they
//! can be tested without a JavaScript host.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use wifiprox::config::PipelineConfig;
use wifiprox::evaluation::{auc_roc, prf_at_threshold, Prf};
use wifiprox::features::{extract, FeatureContext, PopularityIndex, FEATURE_NAMES};
use wifiprox::ingest::HomeRouterMap;
use wifiprox::model::{CandidatePair, Label, WifiScanRecord};
use wifiprox::models::{fit_threshold, ThresholdClassifier};
use wifiprox::pipeline::{self, flatten_bluetooth, holdout, labels, single_feature_results, split_rows};
use wifiprox::synth::{calibrate_stats, generate};

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// All sixteen features of two scans, each given as one WiFi log line.
#[wasm_bindgen]
pub fn compare_scans(a: &str, b: &str) -> Result<String, JsValue> {
    to_js(compare(a, b))
}

/// Best F1 cutoff and AUC for whitespace- or comma-separated scores and 0/1 labels.
#[wasm_bindgen]
pub fn threshold_report(scores: &str, labels: &str) -> Result<String, JsValue> {
    to_js(threshold(scores, labels))
}

/// Generates a small world and summarises its candidates.
#[wasm_bindgen]
pub fn simulate_world(n_users: u32, days: u32, seed: u32) -> Result<String, JsValue> {
    to_js(simulate(n_users as usize, days as usize, u64::from(seed)))
}

pub fn compare(a: &str, b: &str) -> Result<String, String> {
    let parse = |s: &str| serde_json::from_str::<WifiScanRecord>(s.trim()).map_err(|e| format!("scan: {e}"));
    let mut scans = vec![parse(a)?, parse(b)?];
    if scans[0].user() == scans[1].user() {
        return Err("the scans must come from two different users".into());
    }
    if scans[0].user() > scans[1].user() {
        scans.swap(0, 1);
    }
    let pair = CandidatePair {
        user_a: scans[0].user().clone(),
        user_b: scans[1].user().clone(),
        scan_a: 0,
        scan_b: 1,
        ts_a: scans[0].ts(),
        ts_b: scans[1].ts(),
        ts: scans[0].ts().min(scans[1].ts()),
        label: Label::NotProximate,
        bt_rssi: None,
    };
    let mut config = PipelineConfig::default().feature_config();
    // With only two scans on hand, a router both saw is always popular enough.
    config.popularity_window_s = config.popularity_window_s.max((pair.ts_a - pair.ts_b).abs());
    let popularity = PopularityIndex::build(&scans);
    let homes = HomeRouterMap::default();
    let ctx = FeatureContext {
        scans: &scans,
        popularity: &popularity,
        homes: &homes,
        config: &config,
    };
    let v = extract(&pair, &ctx).map_err(|e| e.to_string())?;
    let rows: Vec<(&str, Option<f64>)> = FEATURE_NAMES.iter().copied().zip(v.values()).collect();
    json(&rows)
}

fn numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
        .collect()
}

#[derive(Serialize)]
struct ThresholdOut {
    n: usize,
    auc: f64,
    classifier: ThresholdClassifier,
    prf: Prf,
}

pub fn threshold(scores: &str, labels: &str) -> Result<String, String> {
    let s = numbers(scores)?;
    let l = numbers(labels)?
        .into_iter()
        .map(|x| match x {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(format!("labels must be 0 or 1, got {x}")),
        })
        .collect::<Result<Vec<bool>, String>>()?;
    if s.len() != l.len() {
        return Err(format!("{} scores but {} labels", s.len(), l.len()));
    }
    let classifier = fit_threshold("score", &s, &l).map_err(|e| e.to_string())?;
    json(&ThresholdOut {
        n: s.len(),
        auc: auc_roc(&s, &l).map_err(|e| e.to_string())?,
        prf: prf_at_threshold(&s, &l, &classifier),
        classifier,
    })
}

#[derive(Serialize)]
struct WorldOut {
    n_users: usize,
    n_routers: usize,
    days: usize,
    scans: usize,
    mean_aps: f64,
    candidates: usize,
    positive_fraction: f64,
    homes_found: usize,
    /// Held-out AUC of each feature's threshold classifier.
    feature_auc: Vec<(String, f64)>,
}

pub fn simulate(n_users: usize, days: usize, seed: u64) -> Result<String, String> {
    if !(2..=60).contains(&n_users) || !(1..=3).contains(&days) {
        return Err("the demo allows 2 to 60 users over 1 to 3 days".into());
    }
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    cfg.n_users = n_users;
    cfg.n_routers = (n_users * 5 / 2).max(200);
    cfg.days = days;
    let err = |e: wifiprox::Error| e.to_string();
    let (_, sim) = generate(&cfg.world()).map_err(err)?;
    let sightings = flatten_bluetooth(&sim.bluetooth);
    let prep = pipeline::prepare(sim.wifi, &sightings, &cfg.prep()).map_err(err)?;
    let stats = calibrate_stats(&prep.scans, &prep.candidates);
    let found = prep.homes.entries();
    let homes_found = sim
        .truth
        .homes
        .iter()
        .filter(|h| found.iter().any(|e| e.user == h.user && e.bssid == h.home_bssid))
        .count();

    let y = labels(&prep.candidates);
    let feature_auc = holdout(y.len(), 0.5, y.len(), seed)
        .and_then(|h| split_rows(&prep.features, &y, &h.train, &h.test))
        .and_then(|split| single_feature_results(&split))
        .map(|r| r.into_iter().map(|s| (s.classifier.feature_name, s.test_auc)).collect())
        .unwrap_or_default();

    json(&WorldOut {
        n_users,
        n_routers: cfg.n_routers,
        days,
        scans: stats.n_scans,
        mean_aps: stats.mean_aps,
        candidates: stats.n_candidates,
        positive_fraction: stats.positive_fraction,
        homes_found,
        feature_auc,
    })
}
