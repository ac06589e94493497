//! Scan-log parsing, ambiguous-router removal and home-router detection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use smol_str::SmolStr;

use crate::error::{Error, Result};
use crate::model::{validate_record, BluetoothSighting, Bssid, RawScan, UserId, WifiScanRecord};
use crate::time::MonthKey;

pub const DEFAULT_MAX_SSIDS: usize = 5;
pub const DEFAULT_HOME_BIN_MINUTES: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Skip and count malformed lines.
    #[default]
    Lenient,
    /// Abort on the first malformed line.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

/// Lines that carry data: blank lines and `#` metadata headers are ignored.
fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line))
        .filter(|(_, line)| match line {
            Ok(l) => {
                let t = l.trim_start();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

fn parse_lines<R, T, F>(reader: R, mode: ParseMode, mut parse: F) -> Result<Parsed<T>>
where
    R: BufRead,
    F: FnMut(&str, &mut Vec<T>) -> Result<()>,
{
    let mut out = Parsed {
        records: Vec::new(),
        skipped: 0,
    };
    for (line_no, line) in data_lines(reader) {
        let line = line?;
        let before = out.records.len();
        if let Err(e) = parse(&line, &mut out.records) {
            out.records.truncate(before);
            match mode {
                ParseMode::Strict => {
                    return Err(Error::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    })
                }
                ParseMode::Lenient => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

/// Parses WiFi JSON-Lines: `{"user": .., "ts": .., "aps": [{"bssid", "ssid", "rssi"}]}`.
pub fn parse_wifi_log<R: BufRead>(reader: R, mode: ParseMode) -> Result<Parsed<WifiScanRecord>> {
    parse_lines(reader, mode, |line, out| {
        let raw: RawScan = serde_json::from_str(line)?;
        out.push(validate_record(raw)?);
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BluetoothScanLine {
    pub user: UserId,
    pub ts: i64,
    pub seen: Vec<SeenDevice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeenDevice {
    pub peer: Option<UserId>,
    pub mac: Option<Bssid>,
    pub rssi: i32,
}

/// Parses Bluetooth JSON-Lines, flattening each scan into one sighting per
/// seen device. A line with any invalid device is rejected as a whole.
pub fn parse_bluetooth_log<R: BufRead>(reader: R, mode: ParseMode) -> Result<Parsed<BluetoothSighting>> {
    parse_lines(reader, mode, |line, out| {
        let scan: BluetoothScanLine = serde_json::from_str(line)?;
        for dev in scan.seen {
            let s = BluetoothSighting {
                user: scan.user.clone(),
                ts: scan.ts,
                peer: dev.peer,
                mac: dev.mac,
                rssi: dev.rssi,
            };
            s.validate()?;
            out.push(s);
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub ambiguous_macs: usize,
    pub removed_observations: usize,
    pub total_observations: usize,
}

fn collect_ssids(records: &[WifiScanRecord], cap: usize) -> HashMap<Bssid, HashSet<SmolStr>> {
    let mut names: HashMap<Bssid, HashSet<SmolStr>> = HashMap::new();
    for ap in records.iter().flat_map(|r| r.aps()) {
        let set = names.entry(ap.bssid).or_default();
        if set.len() < cap {
            set.insert(ap.ssid.clone());
        }
    }
    names
}

/// Set of BSSIDs observed with at least `max_ssids` distinct network names
/// anywhere in `records`.
pub fn ambiguous_macs(records: &[WifiScanRecord], max_ssids: usize) -> HashSet<Bssid> {
    // Per-chunk partial maps merged in a second pass; the result is a set, so
    // it does not depend on chunking or merge order.
    let chunks: Vec<&[WifiScanRecord]> = records.chunks(16_384).collect();
    let partials = crate::par::map_slice(&chunks, |c| collect_ssids(c, max_ssids));
    let mut merged: HashMap<Bssid, HashSet<SmolStr>> = HashMap::new();
    for part in partials {
        for (bssid, names) in part {
            let set = merged.entry(bssid).or_default();
            for n in names {
                if set.len() >= max_ssids {
                    break;
                }
                set.insert(n);
            }
        }
    }
    merged
        .into_iter()
        .filter(|(_, names)| names.len() >= max_ssids)
        .map(|(b, _)| b)
        .collect()
}

/// Removes every observation of a BSSID that broadcasts `max_ssids` or more
/// names across the whole input. SSIDs compare by exact bytes; the empty
/// name counts as a name.
pub fn filter_ambiguous_macs(
    mut records: Vec<WifiScanRecord>,
    max_ssids: usize,
) -> Result<(Vec<WifiScanRecord>, CleaningReport)> {
    if max_ssids == 0 {
        return Err(Error::InvalidParameter("max_ssids must be at least 1".into()));
    }
    let bad = ambiguous_macs(&records, max_ssids);
    let mut report = CleaningReport {
        ambiguous_macs: bad.len(),
        ..Default::default()
    };
    for rec in &mut records {
        let before = rec.aps().len();
        report.total_observations += before;
        if !bad.is_empty() {
            rec.retain_aps(|ap| !bad.contains(&ap.bssid));
        }
        report.removed_observations += before - rec.aps().len();
    }
    Ok((records, report))
}

/// The router seen in the largest number of distinct epoch-aligned time
/// bins; ties go to the smallest BSSID.
pub fn detect_home_router<'a, I>(records: I, bin_minutes: u32) -> Option<Bssid>
where
    I: IntoIterator<Item = &'a WifiScanRecord>,
{
    assert!(bin_minutes > 0, "bin size must be positive");
    let bin_s = i64::from(bin_minutes) * 60;
    let mut bins: HashMap<Bssid, HashSet<i64>> = HashMap::new();
    for rec in records {
        let bin = rec.ts().div_euclid(bin_s);
        for ap in rec.aps() {
            bins.entry(ap.bssid).or_default().insert(bin);
        }
    }
    bins.into_iter()
        .map(|(bssid, b)| (b.len(), bssid))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, bssid)| bssid)
}

/// One home router per (user, calendar month).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HomeRouterMap {
    homes: BTreeMap<(UserId, MonthKey), Bssid>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomeEntry {
    pub user: UserId,
    pub month: MonthKey,
    pub bssid: Bssid,
}

impl HomeRouterMap {
    pub fn build(records: &[WifiScanRecord], bin_minutes: u32, tz_offset_s: i32) -> Self {
        let mut groups: BTreeMap<(UserId, MonthKey), Vec<&WifiScanRecord>> = BTreeMap::new();
        for rec in records {
            groups
                .entry((rec.user().clone(), MonthKey::of(rec.ts(), tz_offset_s)))
                .or_default()
                .push(rec);
        }
        let keys: Vec<_> = groups.into_iter().collect();
        let found = crate::par::map_slice(&keys, |(_, recs)| detect_home_router(recs.iter().copied(), bin_minutes));
        let homes = keys
            .into_iter()
            .zip(found)
            .filter_map(|((key, _), home)| home.map(|h| (key, h)))
            .collect();
        HomeRouterMap { homes }
    }

    pub fn insert(&mut self, user: UserId, month: MonthKey, bssid: Bssid) {
        self.homes.insert((user, month), bssid);
    }

    pub fn get(&self, user: &UserId, month: MonthKey) -> Option<Bssid> {
        self.homes.get(&(user.clone(), month)).copied()
    }

    pub fn len(&self) -> usize {
        self.homes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.homes.is_empty()
    }

    pub fn entries(&self) -> Vec<HomeEntry> {
        self.homes
            .iter()
            .map(|((user, month), bssid)| HomeEntry {
                user: user.clone(),
                month: *month,
                bssid: *bssid,
            })
            .collect()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = HomeEntry>) -> Self {
        HomeRouterMap {
            homes: entries.into_iter().map(|e| ((e.user, e.month), e.bssid)).collect(),
        }
    }
}
