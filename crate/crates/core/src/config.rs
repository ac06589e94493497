//! Plain-text `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error. [`KEYS`] documents every key with its default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::models::{default_grid, FeatureSet, Hyperparameters, ModelKind, DEFAULT_FOLDS};
use crate::pipeline::PrepConfig;
use crate::synth::WorldConfig;

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "work_dir",
        ".",
        "directory holding every stage's input and output files",
    ),
    ("wifi", "<work_dir>/wifi.jsonl", "raw WiFi scan log read by `clean`"),
    (
        "bluetooth",
        "<work_dir>/bluetooth.jsonl",
        "Bluetooth scan log read by `pair`",
    ),
    (
        "seed",
        "1",
        "master seed for generation, splitting, tuning and training",
    ),
    ("delta_t", "300", "pairing window in seconds"),
    ("home_bin_minutes", "10", "time-bin width for home-router detection"),
    ("max_ssids", "5", "a BSSID with this many distinct SSIDs is dropped"),
    ("campus_marker", "dtu", "SSID that marks a campus router"),
    ("tz_offset_s", "3600", "local time offset from UTC in seconds"),
    ("alpha", "0.05", "significance level for the RSSI correlations"),
    ("top_ap_tolerance_db", "6", "tolerance of the top_ap_6db feature"),
    (
        "popularity_window_s",
        "300",
        "half-width of the router popularity window",
    ),
    (
        "featureset",
        "FULL",
        "AP_PRESENCE, RSSI, PRESENCE_RSSI, POPULARITY, LOCATION, TIMING, NEARME, SIMPLE, GENERAL or FULL",
    ),
    ("model", "gbt", "gbt or rf"),
    ("grid_trees", "model default", "comma-separated tree counts to search"),
    (
        "grid_depth",
        "model default",
        "comma-separated depths; `none` means unlimited",
    ),
    (
        "grid_learning_rate",
        "0.05,0.1",
        "comma-separated learning rates (gbt only)",
    ),
    ("cv_folds", "5", "folds for the hyperparameter search"),
    ("train_size", "20000", "training rows drawn from the non-held-out pool"),
    (
        "holdout_fraction",
        "0.5",
        "share of candidates reserved as the test set",
    ),
    ("strict_parse", "false", "abort on the first malformed log line"),
    ("n_users", "200", "generate: participants"),
    ("n_routers", "500", "generate: routers"),
    ("days", "7", "generate: simulated days"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    pub wifi: Option<PathBuf>,
    pub bluetooth: Option<PathBuf>,
    pub seed: u64,
    pub delta_t: i64,
    pub home_bin_minutes: u32,
    pub max_ssids: usize,
    pub campus_marker: String,
    pub tz_offset_s: i32,
    pub alpha: f64,
    pub top_ap_tolerance_db: i32,
    pub popularity_window_s: i64,
    pub featureset: FeatureSet,
    pub model: ModelKind,
    pub grid_trees: Option<Vec<usize>>,
    pub grid_depth: Option<Vec<Option<usize>>>,
    pub grid_learning_rate: Option<Vec<f64>>,
    pub cv_folds: usize,
    pub train_size: usize,
    pub holdout_fraction: f64,
    pub strict_parse: bool,
    pub n_users: usize,
    pub n_routers: usize,
    pub days: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let prep = PrepConfig::default();
        let world = WorldConfig::default();
        PipelineConfig {
            work_dir: PathBuf::from("."),
            wifi: None,
            bluetooth: None,
            seed: 1,
            delta_t: prep.delta_t,
            home_bin_minutes: prep.home_bin_minutes,
            max_ssids: prep.max_ssids,
            campus_marker: prep.features.campus_marker,
            tz_offset_s: world.tz_offset_s,
            alpha: prep.features.alpha,
            top_ap_tolerance_db: prep.features.top_ap_tolerance_db,
            popularity_window_s: prep.features.popularity_window_s,
            featureset: FeatureSet::Full,
            model: ModelKind::GradientBoosted,
            grid_trees: None,
            grid_depth: None,
            grid_learning_rate: None,
            cv_folds: DEFAULT_FOLDS,
            train_size: 20_000,
            holdout_fraction: 0.5,
            strict_parse: false,
            n_users: world.n_users,
            n_routers: world.n_routers,
            days: world.days,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_depth(key: &str, value: &str) -> Result<Vec<Option<usize>>> {
    value
        .split(',')
        .map(|v| match v.trim() {
            "none" => Ok(None),
            d => parse(key, d).map(Some),
        })
        .collect()
}

fn uniq<T: PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "work_dir" => self.work_dir = PathBuf::from(value),
            "wifi" => self.wifi = Some(PathBuf::from(value)),
            "bluetooth" => self.bluetooth = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "delta_t" => self.delta_t = parse(key, value)?,
            "home_bin_minutes" => self.home_bin_minutes = parse(key, value)?,
            "max_ssids" => self.max_ssids = parse(key, value)?,
            "campus_marker" => self.campus_marker = value.to_string(),
            "tz_offset_s" => self.tz_offset_s = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "top_ap_tolerance_db" => self.top_ap_tolerance_db = parse(key, value)?,
            "popularity_window_s" => self.popularity_window_s = parse(key, value)?,
            "featureset" => self.featureset = value.parse()?,
            "model" => self.model = value.parse()?,
            "grid_trees" => self.grid_trees = Some(parse_list(key, value)?),
            "grid_depth" => self.grid_depth = Some(parse_depth(key, value)?),
            "grid_learning_rate" => self.grid_learning_rate = Some(parse_list(key, value)?),
            "cv_folds" => self.cv_folds = parse(key, value)?,
            "train_size" => self.train_size = parse(key, value)?,
            "holdout_fraction" => self.holdout_fraction = parse(key, value)?,
            "strict_parse" => self.strict_parse = parse(key, value)?,
            "n_users" => self.n_users = parse(key, value)?,
            "n_routers" => self.n_routers = parse(key, value)?,
            "days" => self.days = parse(key, value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.delta_t < 0 {
            return bad("delta_t must be non-negative");
        }
        if self.home_bin_minutes == 0 {
            return bad("home_bin_minutes must be positive");
        }
        if self.max_ssids < 2 {
            return bad("max_ssids must be at least 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.top_ap_tolerance_db < 0 || self.popularity_window_s < 0 {
            return bad("tolerances must be non-negative");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout_fraction must lie in (0, 1)");
        }
        if self.train_size == 0 {
            return bad("train_size must be positive");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if self.grid_trees.as_ref().is_some_and(|t| t.contains(&0)) {
            return bad("grid_trees entries must be positive");
        }
        if self.grid_depth.as_ref().is_some_and(|d| d.contains(&Some(0))) {
            return bad("grid_depth entries must be positive");
        }
        if self
            .grid_learning_rate
            .as_ref()
            .is_some_and(|l| l.iter().any(|r| !(*r > 0.0 && *r <= 1.0)))
        {
            return bad("grid_learning_rate entries must lie in (0, 1]");
        }
        self.world().validate()
    }

    pub fn wifi_path(&self) -> PathBuf {
        self.wifi.clone().unwrap_or_else(|| self.path("wifi.jsonl"))
    }

    pub fn bluetooth_path(&self) -> PathBuf {
        self.bluetooth.clone().unwrap_or_else(|| self.path("bluetooth.jsonl"))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            alpha: self.alpha,
            top_ap_tolerance_db: self.top_ap_tolerance_db,
            popularity_window_s: self.popularity_window_s,
            campus_marker: self.campus_marker.clone(),
            tz_offset_s: self.tz_offset_s,
        }
    }

    pub fn prep(&self) -> PrepConfig {
        PrepConfig {
            max_ssids: self.max_ssids,
            home_bin_minutes: self.home_bin_minutes,
            delta_t: self.delta_t,
            features: self.feature_config(),
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            seed: self.seed,
            n_users: self.n_users,
            n_routers: self.n_routers,
            days: self.days,
            tz_offset_s: self.tz_offset_s,
            ..WorldConfig::default()
        }
    }

    /// The search grid for the configured model: the model's default grid
    /// with any `grid_*` keys replacing the corresponding axis.
    pub fn grid(&self) -> Vec<Hyperparameters> {
        let defaults = default_grid(self.model);
        let trees = self
            .grid_trees
            .clone()
            .unwrap_or_else(|| uniq(defaults.iter().map(|h| h.n_trees)));
        let depths = self
            .grid_depth
            .clone()
            .unwrap_or_else(|| uniq(defaults.iter().map(|h| h.max_depth)));
        let rates = match self.model {
            ModelKind::GradientBoosted => self
                .grid_learning_rate
                .clone()
                .unwrap_or_else(|| uniq(defaults.iter().map(|h| h.learning_rate))),
            ModelKind::RandomForest => vec![1.0],
        };
        let mut grid = Vec::new();
        for &n_trees in &trees {
            for &max_depth in &depths {
                for &learning_rate in &rates {
                    grid.push(match self.model {
                        ModelKind::GradientBoosted => Hyperparameters {
                            max_depth,
                            ..Hyperparameters::gbt(n_trees, 1, learning_rate)
                        },
                        ModelKind::RandomForest => Hyperparameters::rf(n_trees, max_depth),
                    });
                }
            }
        }
        grid
    }

    /// Canonical text of the keys that shape data files. Paths, parse
    /// strictness, the featureset, the model and its grid are left out so
    /// that every trained model over the same features shares one hash.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        kv("seed", self.seed.to_string());
        kv("delta_t", self.delta_t.to_string());
        kv("home_bin_minutes", self.home_bin_minutes.to_string());
        kv("max_ssids", self.max_ssids.to_string());
        kv("campus_marker", self.campus_marker.clone());
        kv("tz_offset_s", self.tz_offset_s.to_string());
        kv("alpha", self.alpha.to_string());
        kv("top_ap_tolerance_db", self.top_ap_tolerance_db.to_string());
        kv("popularity_window_s", self.popularity_window_s.to_string());
        kv("train_size", self.train_size.to_string());
        kv("holdout_fraction", self.holdout_fraction.to_string());
        kv("n_users", self.n_users.to_string());
        kv("n_routers", self.n_routers.to_string());
        kv("days", self.days.to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Full configuration as a loadable, commented file.
    pub fn to_text(&self) -> String {
        let opt = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        let depth = |d: &Option<usize>| d.map_or("none".to_string(), |d| d.to_string());
        let mut s = String::new();
        for &(key, default, doc) in KEYS {
            let value = match key {
                "work_dir" => Some(self.work_dir.display().to_string()),
                "wifi" => opt(&self.wifi),
                "bluetooth" => opt(&self.bluetooth),
                "seed" => Some(self.seed.to_string()),
                "delta_t" => Some(self.delta_t.to_string()),
                "home_bin_minutes" => Some(self.home_bin_minutes.to_string()),
                "max_ssids" => Some(self.max_ssids.to_string()),
                "campus_marker" => Some(self.campus_marker.clone()),
                "tz_offset_s" => Some(self.tz_offset_s.to_string()),
                "alpha" => Some(self.alpha.to_string()),
                "top_ap_tolerance_db" => Some(self.top_ap_tolerance_db.to_string()),
                "popularity_window_s" => Some(self.popularity_window_s.to_string()),
                "featureset" => Some(self.featureset.to_string()),
                "model" => Some(self.model.name().to_string()),
                "grid_trees" => self.grid_trees.as_deref().map(join),
                "grid_depth" => self
                    .grid_depth
                    .as_ref()
                    .map(|d| d.iter().map(depth).collect::<Vec<_>>().join(",")),
                "grid_learning_rate" => self.grid_learning_rate.as_deref().map(join),
                "cv_folds" => Some(self.cv_folds.to_string()),
                "train_size" => Some(self.train_size.to_string()),
                "holdout_fraction" => Some(self.holdout_fraction.to_string()),
                "strict_parse" => Some(self.strict_parse.to_string()),
                "n_users" => Some(self.n_users.to_string()),
                "n_routers" => Some(self.n_routers.to_string()),
                "days" => Some(self.days.to_string()),
                _ => unreachable!("every key is listed"),
            };
            writeln!(s, "# {doc} (default: {default})").expect("string write");
            match value {
                Some(v) => writeln!(s, "{key} = {v}\n"),
                None => writeln!(s, "# {key} =\n"),
            }
            .expect("string write");
        }
        s
    }
}
