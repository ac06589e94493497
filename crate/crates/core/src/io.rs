//! File formats shared by the pipeline stages.
//!
//! Every derived JSON-Lines or CSV file starts with a metadata line
//! `# wifiprox schema=<n> config=<hash>`. Parsers skip `#` lines, so the
//! files stay readable by generic tools.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_NAMES, NUM_FEATURES};
use crate::model::{CandidatePair, Label, UserId, WifiScanRecord};
use crate::synth::GroundTruth;

pub const FILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileHeader {
    pub schema: u32,
    pub config: String,
}

impl FileHeader {
    pub fn new(config_hash: &str) -> Self {
        FileHeader {
            schema: FILE_SCHEMA_VERSION,
            config: config_hash.to_string(),
        }
    }

    pub fn line(&self) -> String {
        format!("# wifiprox schema={} config={}", self.schema, self.config)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.trim().strip_prefix("# wifiprox ")?;
        let (mut schema, mut config) = (None, None);
        for part in rest.split_whitespace() {
            match part.split_once('=') {
                Some(("schema", v)) => schema = v.parse().ok(),
                Some(("config", v)) => config = Some(v.to_string()),
                _ => {}
            }
        }
        Some(FileHeader {
            schema: schema?,
            config: config?,
        })
    }
}

/// Header of a file, if its first line carries one.
pub fn read_header(path: &Path) -> Result<Option<FileHeader>> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(FileHeader::parse(&first))
}

/// Fails unless `path` carries a current-schema header with `config_hash`.
pub fn check_header(path: &Path, config_hash: &str) -> Result<()> {
    match read_header(path)? {
        None => Err(Error::Schema(format!("{}: no wifiprox header", path.display()))),
        Some(h) if h.schema != FILE_SCHEMA_VERSION => Err(Error::Schema(format!(
            "{}: schema version {} (expected {FILE_SCHEMA_VERSION})",
            path.display(),
            h.schema
        ))),
        Some(h) if h.config != config_hash => Err(Error::Schema(format!(
            "{}: written under config {} but the current config is {config_hash}",
            path.display(),
            h.config
        ))),
        Some(_) => Ok(()),
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, config_hash: &str, items: &[T]) -> Result<()> {
    writeln!(w, "{}", FileHeader::new(config_hash).line())?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// A JSON document with the header fields inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub schema_version: u32,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    pub fn new(config_hash: &str, body: T) -> Self {
        Stamped {
            schema_version: FILE_SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            body,
        }
    }

    pub fn check(&self, config_hash: &str) -> Result<()> {
        if self.schema_version != FILE_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema version {} (expected {FILE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.config_hash != config_hash {
            return Err(Error::Schema(format!(
                "written under config {} but expected {config_hash}",
                self.config_hash
            )));
        }
        Ok(())
    }
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Ground truth as JSON-Lines: one `{"ts", "pairs"}` line per tick with
/// anyone in range, then one `{"user", "home_bssid"}` line per user.
pub fn write_truth<W: Write>(mut w: W, config_hash: &str, truth: &GroundTruth) -> Result<()> {
    writeln!(w, "{}", FileHeader::new(config_hash).line())?;
    for step in truth.steps.iter().filter(|s| !s.pairs.is_empty()) {
        serde_json::to_writer(&mut w, step)?;
        w.write_all(b"\n")?;
    }
    for home in &truth.homes {
        serde_json::to_writer(&mut w, home)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Pair keys as stored in the candidate and feature tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairKey {
    pub user_a: UserId,
    pub user_b: UserId,
    pub ts_a: i64,
    pub ts_b: i64,
    pub ts: i64,
}

impl PairKey {
    pub fn of(c: &CandidatePair) -> Self {
        PairKey {
            user_a: c.user_a.clone(),
            user_b: c.user_b.clone(),
            ts_a: c.ts_a,
            ts_b: c.ts_b,
            ts: c.ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateRow {
    pub key: PairKey,
    pub label: bool,
    pub bt_rssi: Option<i32>,
}

const CANDIDATE_COLUMNS: [&str; 7] = ["user_a", "user_b", "ts_a", "ts_b", "ts", "label", "bt_rssi"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer<W: Write>(mut w: W, config_hash: &str) -> Result<csv::Writer<W>> {
    writeln!(w, "{}", FileHeader::new(config_hash).line())?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Malformed {
        line,
        message: format!("column {}: cannot parse `{raw}`", i + 1),
    })
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, i, line).map(Some),
    }
}

fn check_columns(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema(format!(
            "unexpected columns {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

fn read_key(rec: &csv::StringRecord, line: usize) -> Result<PairKey> {
    Ok(PairKey {
        user_a: UserId::new(rec.get(0).unwrap_or("")),
        user_b: UserId::new(rec.get(1).unwrap_or("")),
        ts_a: field(rec, 2, line)?,
        ts_b: field(rec, 3, line)?,
        ts: field(rec, 4, line)?,
    })
}

fn key_fields(k: &PairKey) -> [String; 5] {
    [
        k.user_a.to_string(),
        k.user_b.to_string(),
        k.ts_a.to_string(),
        k.ts_b.to_string(),
        k.ts.to_string(),
    ]
}

pub fn write_candidates<W: Write>(w: W, config_hash: &str, candidates: &[CandidatePair]) -> Result<()> {
    let mut out = csv_writer(w, config_hash)?;
    out.write_record(CANDIDATE_COLUMNS)?;
    for c in candidates {
        let mut rec = key_fields(&PairKey::of(c)).to_vec();
        rec.push(u8::from(c.is_positive()).to_string());
        rec.push(opt(c.bt_rssi));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_candidates<R: std::io::Read>(r: R) -> Result<Vec<CandidateRow>> {
    let mut rdr = csv_reader(r);
    check_columns(rdr.headers()?, &CANDIDATE_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        out.push(CandidateRow {
            key: read_key(&rec, line)?,
            label: field::<u8>(&rec, 5, line)? == 1,
            bt_rssi: opt_field(&rec, 6, line)?,
        });
    }
    Ok(out)
}

/// Rebuilds candidate pairs against a scan table. A `(user, ts)` key maps
/// to the first scan of that user at that instant.
pub fn resolve_candidates(rows: &[CandidateRow], scans: &[WifiScanRecord]) -> Result<Vec<CandidatePair>> {
    let mut index: HashMap<(&UserId, i64), usize> = HashMap::with_capacity(scans.len());
    for (i, s) in scans.iter().enumerate() {
        index.entry((s.user(), s.ts())).or_insert(i);
    }
    let find = |user: &UserId, ts: i64| {
        index
            .get(&(user, ts))
            .copied()
            .ok_or_else(|| Error::InvalidRecord(format!("no scan of {user} at {ts}")))
    };
    rows.iter()
        .map(|r| {
            Ok(CandidatePair {
                scan_a: find(&r.key.user_a, r.key.ts_a)?,
                scan_b: find(&r.key.user_b, r.key.ts_b)?,
                user_a: r.key.user_a.clone(),
                user_b: r.key.user_b.clone(),
                ts_a: r.key.ts_a,
                ts_b: r.key.ts_b,
                ts: r.key.ts,
                label: if r.label { Label::Proximate } else { Label::NotProximate },
                bt_rssi: r.bt_rssi,
            })
        })
        .collect()
}

/// One row of the feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub key: PairKey,
    pub features: FeatureVector,
    pub label: bool,
    pub bt_rssi: Option<i32>,
}

fn feature_columns() -> Vec<&'static str> {
    let mut cols = CANDIDATE_COLUMNS[..5].to_vec();
    cols.extend(FEATURE_NAMES);
    cols.extend(["label", "bt_rssi"]);
    cols
}

pub fn write_features<W: Write>(
    w: W,
    config_hash: &str,
    candidates: &[CandidatePair],
    features: &[FeatureVector],
) -> Result<()> {
    if candidates.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: candidates.len(),
            actual: features.len(),
        });
    }
    let mut out = csv_writer(w, config_hash)?;
    out.write_record(feature_columns())?;
    for (c, v) in candidates.iter().zip(features) {
        let mut rec = key_fields(&PairKey::of(c)).to_vec();
        rec.extend(v.values().iter().map(|x| opt(*x)));
        rec.push(u8::from(c.is_positive()).to_string());
        rec.push(opt(c.bt_rssi));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features<R: std::io::Read>(r: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv_reader(r);
    check_columns(rdr.headers()?, &feature_columns())?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mut values = [None; NUM_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            *v = opt_field(&rec, 5 + j, line)?;
        }
        out.push(FeatureRow {
            key: read_key(&rec, line)?,
            features: FeatureVector::from_values(&values).map_err(|e| Error::Malformed {
                line,
                message: e.to_string(),
            })?,
            label: field::<u8>(&rec, 5 + NUM_FEATURES, line)? == 1,
            bt_rssi: opt_field(&rec, 6 + NUM_FEATURES, line)?,
        });
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}
