//! Labeled candidate pairs: co-temporal scans of Bluetooth-active users,
//! labeled by Bluetooth co-sightings.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{overlap_count, BluetoothSighting, CandidatePair, Label, UserId, WifiScanRecord};

pub const DEFAULT_DELTA_T: i64 = 300;
const HOUR: i64 = 3600;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HourWindow {
    pub start_ts: i64,
    pub active_users: BTreeSet<UserId>,
}

/// One window per hour with at least one active user. A participant sighting
/// is treated as symmetric: both the scanner and the sighted peer count as
/// having seen and been seen.
pub fn build_hour_windows(bt: &[BluetoothSighting]) -> Vec<HourWindow> {
    let mut active: BTreeMap<i64, BTreeSet<UserId>> = BTreeMap::new();
    for s in bt {
        if let Some(peer) = s.participant() {
            let users = active.entry(s.ts.div_euclid(HOUR) * HOUR).or_default();
            users.insert(s.user.clone());
            users.insert(peer.clone());
        }
    }
    active
        .into_iter()
        .map(|(start_ts, active_users)| HourWindow { start_ts, active_users })
        .collect()
}

/// Participant-to-participant sightings by unordered user pair.
#[derive(Debug, Default)]
pub struct SightingIndex {
    by_pair: HashMap<(UserId, UserId), Vec<(i64, i32)>>,
}

fn ordered(a: &UserId, b: &UserId) -> (UserId, UserId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl SightingIndex {
    pub fn build(bt: &[BluetoothSighting]) -> Self {
        let mut by_pair: HashMap<(UserId, UserId), Vec<(i64, i32)>> = HashMap::new();
        for s in bt {
            if let Some(peer) = s.participant() {
                by_pair.entry(ordered(&s.user, peer)).or_default().push((s.ts, s.rssi));
            }
        }
        for v in by_pair.values_mut() {
            v.sort_unstable();
        }
        SightingIndex { by_pair }
    }

    /// Strongest RSSI among sightings in either direction within
    /// `[ts - delta_t, ts + delta_t]`.
    pub fn strongest(&self, a: &UserId, b: &UserId, ts: i64, delta_t: i64) -> Option<i32> {
        let list = self.by_pair.get(&ordered(a, b))?;
        let lo = list.partition_point(|&(t, _)| t < ts - delta_t);
        let hi = list.partition_point(|&(t, _)| t <= ts + delta_t);
        list[lo..hi].iter().map(|&(_, r)| r).max()
    }
}

/// Index of the scan in `times` closest to `ts`; ties go to the earlier one.
fn nearest(times: &[(i64, usize)], ts: i64) -> Option<(i64, usize)> {
    let pos = times.partition_point(|&(t, _)| t < ts);
    let before = pos.checked_sub(1).map(|i| times[i]);
    let after = times.get(pos).copied();
    match (before, after) {
        (Some(b), Some(a)) => Some(if ts - b.0 <= a.0 - ts { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Candidates inside one hour window.
///
/// `user_scans` maps each active user to `(ts, scan index)` pairs sorted by
/// time, restricted to the window. Each scan of the lexicographically smaller
/// user is paired with the nearest-in-time scan of the other user when the
/// two are at most `delta_t` apart. Pairs without Bluetooth support are kept
/// as negatives only if the scans share a router.
pub fn generate_candidates(
    user_scans: &BTreeMap<UserId, Vec<(i64, usize)>>,
    scans: &[WifiScanRecord],
    sightings: &SightingIndex,
    delta_t: i64,
) -> Vec<CandidatePair> {
    let users: Vec<(&UserId, &Vec<(i64, usize)>)> = user_scans.iter().collect();
    let mut out = Vec::new();
    for (i, &(user_a, scans_a)) in users.iter().enumerate() {
        for &(user_b, scans_b) in &users[i + 1..] {
            for &(ts_a, idx_a) in scans_a {
                let Some((ts_b, idx_b)) = nearest(scans_b, ts_a) else {
                    continue;
                };
                if (ts_a - ts_b).abs() > delta_t {
                    continue;
                }
                let ts = ts_a.min(ts_b);
                let bt_rssi = sightings.strongest(user_a, user_b, ts, delta_t);
                let label = if bt_rssi.is_some() {
                    Label::Proximate
                } else if overlap_count(&scans[idx_a], &scans[idx_b]) > 0 {
                    Label::NotProximate
                } else {
                    continue;
                };
                out.push(CandidatePair {
                    user_a: user_a.clone(),
                    user_b: user_b.clone(),
                    scan_a: idx_a,
                    scan_b: idx_b,
                    ts_a,
                    ts_b,
                    ts,
                    label,
                    bt_rssi,
                });
            }
        }
    }
    out
}

fn sort_key(c: &CandidatePair) -> (i64, &UserId, &UserId, i64) {
    (c.ts, &c.user_a, &c.user_b, c.ts_a)
}

/// Full candidate generation: hour windows, activity filter, per-window
/// pairing, merged in (ts, user_a, user_b, ts_a) order.
pub fn build_candidates(scans: &[WifiScanRecord], bt: &[BluetoothSighting], delta_t: i64) -> Vec<CandidatePair> {
    let windows = build_hour_windows(bt);
    let sightings = SightingIndex::build(bt);
    let active: HashMap<i64, &BTreeSet<UserId>> = windows.iter().map(|w| (w.start_ts, &w.active_users)).collect();

    let mut per_window: BTreeMap<i64, BTreeMap<UserId, Vec<(i64, usize)>>> = BTreeMap::new();
    for (idx, scan) in scans.iter().enumerate() {
        let hour = scan.ts().div_euclid(HOUR) * HOUR;
        if active.get(&hour).is_some_and(|users| users.contains(scan.user())) {
            per_window
                .entry(hour)
                .or_default()
                .entry(scan.user().clone())
                .or_default()
                .push((scan.ts(), idx));
        }
    }
    let groups: Vec<BTreeMap<UserId, Vec<(i64, usize)>>> = per_window
        .into_values()
        .map(|mut g| {
            for v in g.values_mut() {
                v.sort_unstable();
            }
            g
        })
        .collect();
    let mut out: Vec<CandidatePair> =
        crate::par::map_slice(&groups, |g| generate_candidates(g, scans, &sightings, delta_t))
            .into_iter()
            .flatten()
            .collect();
    out.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    out
}

/// Uniform sample of `train_size` indices out of `n` without replacement.
/// Both returned lists are ascending and together partition `0..n`.
pub fn split_train_test(n: usize, train_size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if train_size > n {
        return Err(Error::SampleTooLarge {
            requested: train_size,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = index::sample(&mut rng, n, train_size).into_vec();
    train.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }
    let test = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((train, test))
}
