//! One function per subcommand. Each reads and writes only the files named
//! in its doc comment, all inside the work directory.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wifiprox::config::PipelineConfig;
use wifiprox::evaluation::{auc_roc, prf_at_threshold, stratified_report, EvalReport, Prf, StratumKeys};
use wifiprox::features::apply_imputation;
use wifiprox::ingest::{parse_bluetooth_log, parse_wifi_log, CleaningReport, HomeEntry, HomeRouterMap, ParseMode};
use wifiprox::io::{self, FeatureRow, Stamped};
use wifiprox::models::{fit_threshold, FeatureSet, Hyperparameters, ModelKind, ThresholdClassifier, TreeEnsembleModel};
use wifiprox::pipeline::{
    self, holdout, pick_rows, score_rows, single_feature_results, split_rows, SingleFeatureResult,
};
use wifiprox::{Error, Result};

const CLEAN: &str = "clean.jsonl";
const HOMES: &str = "homes.jsonl";
const CLEANING: &str = "cleaning.json";
const TRUTH: &str = "truth.jsonl";
const CANDIDATES: &str = "candidates.csv";
const FEATURES: &str = "features.csv";
const SINGLE: &str = "single_features.json";
const REPORT: &str = "report.json";

fn mode(cfg: &PipelineConfig) -> ParseMode {
    if cfg.strict_parse {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    }
}

fn model_stem(featureset: FeatureSet, kind: ModelKind) -> String {
    format!("{}-{}", featureset.name().to_lowercase(), kind.name())
}

/// Raw logs may lack a header; if one is present it must match.
fn check_optional_header(path: &Path, hash: &str) -> Result<()> {
    match io::read_header(path)? {
        Some(_) => io::check_header(path, hash),
        None => Ok(()),
    }
}

/// Writes `wifi.jsonl`, `bluetooth.jsonl` and `truth.jsonl`.
pub fn generate(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    std::fs::create_dir_all(&cfg.work_dir)?;
    let (_, sim) = wifiprox::synth::generate(&cfg.world())?;
    io::write_jsonl(io::create(&cfg.wifi_path())?, &hash, &sim.wifi)?;
    io::write_jsonl(io::create(&cfg.bluetooth_path())?, &hash, &sim.bluetooth)?;
    io::write_truth(io::create(&cfg.path(TRUTH))?, &hash, &sim.truth)?;
    eprintln!(
        "generated {} WiFi scans and {} Bluetooth scans",
        sim.wifi.len(),
        sim.bluetooth.len()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CleaningSummary {
    skipped_lines: usize,
    #[serde(flatten)]
    report: CleaningReport,
    homes: usize,
}

/// Reads the WiFi log; writes `clean.jsonl`, `homes.jsonl` and `cleaning.json`.
pub fn clean(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let input = cfg.wifi_path();
    check_optional_header(&input, &hash)?;
    let parsed = parse_wifi_log(io::open(&input)?, mode(cfg))?;
    let (scans, report, homes) = pipeline::clean(parsed.records, &cfg.prep())?;
    io::write_jsonl(io::create(&cfg.path(CLEAN))?, &hash, &scans)?;
    io::write_jsonl(io::create(&cfg.path(HOMES))?, &hash, &homes.entries())?;
    let summary = CleaningSummary {
        skipped_lines: parsed.skipped,
        report,
        homes: homes.len(),
    };
    io::write_json(io::create(&cfg.path(CLEANING))?, &Stamped::new(&hash, summary))?;
    eprintln!(
        "kept {} scans; removed {} ambiguous routers; skipped {} lines",
        scans.len(),
        report.ambiguous_macs,
        parsed.skipped
    );
    Ok(())
}

fn read_clean(cfg: &PipelineConfig, hash: &str) -> Result<Vec<wifiprox::model::WifiScanRecord>> {
    let path = cfg.path(CLEAN);
    io::check_header(&path, hash)?;
    Ok(parse_wifi_log(io::open(&path)?, ParseMode::Strict)?.records)
}

/// Reads `clean.jsonl` and the Bluetooth log; writes `candidates.csv`.
pub fn pair(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let scans = read_clean(cfg, &hash)?;
    let bt_path = cfg.bluetooth_path();
    check_optional_header(&bt_path, &hash)?;
    let bt = parse_bluetooth_log(io::open(&bt_path)?, mode(cfg))?;
    let candidates = wifiprox::pairing::build_candidates(&scans, &bt.records, cfg.delta_t);
    io::write_candidates(io::create(&cfg.path(CANDIDATES))?, &hash, &candidates)?;
    let positives = candidates.iter().filter(|c| c.is_positive()).count();
    eprintln!("{} candidates, {positives} positive", candidates.len());
    Ok(())
}

/// Reads `clean.jsonl`, `homes.jsonl` and `candidates.csv`; writes `features.csv`.
pub fn featurize(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let scans = read_clean(cfg, &hash)?;
    let homes_path = cfg.path(HOMES);
    io::check_header(&homes_path, &hash)?;
    let homes: Vec<HomeEntry> = io::read_jsonl(io::open(&homes_path)?)?;
    let homes = HomeRouterMap::from_entries(homes);
    let cand_path = cfg.path(CANDIDATES);
    io::check_header(&cand_path, &hash)?;
    let rows = io::read_candidates(io::open(&cand_path)?)?;
    let candidates = io::resolve_candidates(&rows, &scans)?;
    let features = pipeline::featurize(&scans, &homes, &candidates, &cfg.feature_config())?;
    io::write_features(io::create(&cfg.path(FEATURES))?, &hash, &candidates, &features)?;
    eprintln!("{} feature rows", features.len());
    Ok(())
}

fn read_features(cfg: &PipelineConfig, hash: &str) -> Result<Vec<FeatureRow>> {
    let path = cfg.path(FEATURES);
    io::check_header(&path, hash)?;
    io::read_features(io::open(&path)?)
}

struct Prepared {
    rows: Vec<FeatureRow>,
    labels: Vec<bool>,
    split: pipeline::Holdout,
}

fn prepared(cfg: &PipelineConfig, hash: &str) -> Result<Prepared> {
    let rows = read_features(cfg, hash)?;
    let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let split = holdout(rows.len(), cfg.holdout_fraction, cfg.train_size, cfg.seed)?;
    if split.train.len() < cfg.train_size {
        eprintln!(
            "note: training pool holds {} rows, fewer than train_size {}",
            split.train.len(),
            cfg.train_size
        );
    }
    Ok(Prepared { rows, labels, split })
}

/// Reads `features.csv`; writes `model-<featureset>-<model>.json` and
/// `cv-<featureset>-<model>.json`.
pub fn train(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let p = prepared(cfg, &hash)?;
    let vectors: Vec<_> = p.rows.iter().map(|r| r.features).collect();
    let split = split_rows(&vectors, &p.labels, &p.split.train, &p.split.test)?;
    let grid = cfg.grid();
    let outcome = pipeline::train_featureset(
        &split,
        cfg.featureset,
        cfg.model,
        pipeline::Tuning::Grid {
            grid: &grid,
            folds: cfg.cv_folds,
        },
        cfg.seed,
    )?;
    let mut model = outcome.model;
    model.config_hash = Some(hash.clone());
    let stem = model_stem(cfg.featureset, cfg.model);
    model.save(io::create(&cfg.path(&format!("model-{stem}.json")))?)?;
    if let Some(cv) = outcome.cv {
        let best = cv.best();
        io::write_json(
            io::create(&cfg.path(&format!("cv-{stem}.json")))?,
            &Stamped::new(&hash, cv),
        )?;
        eprintln!("trained {stem} with {best:?}");
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scores {
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Scores {
    fn new(auc: f64, prf: &Prf) -> Self {
        Scores {
            auc,
            f1: prf.f1,
            precision: prf.precision,
            recall: prf.recall,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelEvaluation {
    featureset: FeatureSet,
    model: ModelKind,
    hyperparameters: Hyperparameters,
    train: Scores,
    test: EvalReport,
    feature_importance: Vec<(String, f64)>,
}

/// Reads `features.csv` and `model-<featureset>-<model>.json`; writes
/// `eval-<featureset>-<model>.json` and `single_features.json`.
pub fn evaluate(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let p = prepared(cfg, &hash)?;
    let stem = model_stem(cfg.featureset, cfg.model);
    let model = TreeEnsembleModel::load(io::open(&cfg.path(&format!("model-{stem}.json")))?)?;
    if model.config_hash.as_deref() != Some(hash.as_str()) {
        return Err(Error::Schema(format!(
            "model-{stem}.json was trained under another config"
        )));
    }

    let vectors: Vec<_> = p.rows.iter().map(|r| r.features).collect();
    let imputed = |idx: &[usize]| apply_imputation(&pick_rows(&vectors, idx), &model.imputation);
    let (train_x, test_x) = (imputed(&p.split.train), imputed(&p.split.test));
    let train_y = pick_rows(&p.labels, &p.split.train);
    let test_y = pick_rows(&p.labels, &p.split.test);
    let train_scores = score_rows(&model, &train_x)?;
    let test_scores = score_rows(&model, &test_x)?;
    let classifier = match &model.operating_point {
        Some(c) => c.clone(),
        None => fit_threshold("score", &train_scores, &train_y)?,
    };
    let keys: Vec<StratumKeys> = p
        .split
        .test
        .iter()
        .map(|&i| StratumKeys::of(&p.rows[i].features, p.rows[i].key.ts))
        .collect();
    let bt: Vec<Option<i32>> = p.split.test.iter().map(|&i| p.rows[i].bt_rssi).collect();
    let report = stratified_report(&test_scores, &test_y, &keys, &bt, &classifier, cfg.tz_offset_s)?;
    let evaluation = ModelEvaluation {
        featureset: model.featureset,
        model: model.kind(),
        hyperparameters: model.ensemble.hyperparameters,
        train: Scores::new(
            auc_roc(&train_scores, &train_y)?,
            &prf_at_threshold(&train_scores, &train_y, &classifier),
        ),
        feature_importance: model.feature_importance(),
        test: report,
    };
    eprintln!(
        "{stem}: test AUC {:.4}, F1 {:.4}",
        evaluation.test.auc, evaluation.test.prf.f1
    );
    io::write_json(
        io::create(&cfg.path(&format!("eval-{stem}.json")))?,
        &Stamped::new(&hash, evaluation),
    )?;

    let split = split_rows(&vectors, &p.labels, &p.split.train, &p.split.test)?;
    let singles = single_feature_results(&split)?;
    io::write_json(
        io::create(&cfg.path(SINGLE))?,
        &Stamped::new(&hash, Singles { features: singles }),
    )?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Singles {
    features: Vec<SingleFeatureResult>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureLine {
    #[serde(flatten)]
    classifier: ThresholdClassifier,
    train: Scores,
    test: Scores,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelLine {
    featureset: FeatureSet,
    model: ModelKind,
    train: Scores,
    test: Scores,
}

#[derive(Debug, Serialize, Deserialize)]
struct Report {
    single_features: Vec<FeatureLine>,
    featuresets: Vec<ModelLine>,
}

/// Reads `single_features.json` and every `eval-*.json`; writes `report.json`.
pub fn report(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.hash();
    let singles: Stamped<Singles> = io::read_json(&cfg.path(SINGLE))?;
    singles.check(&hash)?;
    let mut evals: Vec<_> = std::fs::read_dir(&cfg.work_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("eval-") && n.ends_with(".json"))
        })
        .collect();
    evals.sort();
    let mut featuresets = Vec::new();
    for path in &evals {
        let e: Stamped<ModelEvaluation> = io::read_json(path)?;
        e.check(&hash)
            .map_err(|err| Error::Schema(format!("{}: {err}", path.display())))?;
        let e = e.body;
        featuresets.push(ModelLine {
            featureset: e.featureset,
            model: e.model,
            train: e.train,
            test: Scores::new(e.test.auc, &e.test.prf),
        });
    }
    featuresets.sort_by_key(|m| (m.featureset, m.model.name()));
    let single_features = singles
        .body
        .features
        .into_iter()
        .map(|s| FeatureLine {
            classifier: s.classifier,
            train: Scores::new(s.train_auc, &s.train),
            test: Scores::new(s.test_auc, &s.test),
        })
        .collect();
    let report = Report {
        single_features,
        featuresets,
    };
    io::write_json(io::create(&cfg.path(REPORT))?, &Stamped::new(&hash, report))?;
    eprintln!("report covers {} trained models", evals.len());
    Ok(())
}
