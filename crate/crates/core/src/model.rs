//! Domain types shared by every stage of the pipeline.
//!
//! Scans are validated on construction: BSSIDs are canonicalized, duplicate
//! observations collapse to the strongest reading, and the access-point list
//! is kept sorted by BSSID so that [`intersect`] is a linear merge.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smol_str::SmolStr;

use crate::error::{Error, Result};

/// 48-bit MAC address of an access point radio (or a Bluetooth device).
///
/// Ordering on the numeric value coincides with lexicographic ordering of the
/// canonical lowercase rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bssid(u64);

impl Bssid {
    pub const MAX: u64 = (1 << 48) - 1;

    pub fn from_u64(raw: u64) -> Option<Self> {
        (raw <= Self::MAX).then_some(Bssid(raw))
    }

    pub fn as_u64(self) -> u64 {
        self.0
    }
}

impl FromStr for Bssid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::InvalidRecord(format!("malformed MAC address `{s}`"));
        let mut value = 0u64;
        let mut groups = 0;
        for group in s.split(':') {
            if group.len() != 2 || !group.bytes().all(|c| c.is_ascii_hexdigit()) {
                return Err(invalid());
            }
            let byte = u8::from_str_radix(group, 16).map_err(|_| invalid())?;
            value = (value << 8) | u64::from(byte);
            groups += 1;
        }
        if groups != 6 {
            return Err(invalid());
        }
        Ok(Bssid(value))
    }
}

impl fmt::Display for Bssid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[2], b[3], b[4], b[5], b[6], b[7]
        )
    }
}

impl Serialize for Bssid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bssid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MacVisitor;

        impl serde::de::Visitor<'_> for MacVisitor {
            type Value = Bssid;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a colon-separated MAC address")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Bssid, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_str(MacVisitor)
    }
}

/// Opaque participant identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(SmolStr);

impl UserId {
    pub fn new(id: impl AsRef<str>) -> Self {
        UserId(SmolStr::new(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApObservation {
    pub bssid: Bssid,
    pub ssid: SmolStr,
    pub rssi: i32,
}

impl ApObservation {
    pub fn new(bssid: Bssid, ssid: impl AsRef<str>, rssi: i32) -> Self {
        ApObservation {
            bssid,
            ssid: SmolStr::new(ssid.as_ref()),
            rssi,
        }
    }
}

/// A scan as it appears on the wire, before validation.
#[derive(Debug, Clone, Deserialize)]
pub struct RawScan {
    pub user: String,
    pub ts: Option<i64>,
    #[serde(default)]
    pub aps: Vec<RawAp>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawAp {
    pub bssid: SmolStr,
    #[serde(default)]
    pub ssid: SmolStr,
    pub rssi: i32,
}

/// One device's WiFi scan at an instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WifiScanRecord {
    user: UserId,
    ts: i64,
    aps: Vec<ApObservation>,
}

impl WifiScanRecord {
    /// Validates and canonicalizes a scan.
    pub fn new(user: UserId, ts: i64, mut aps: Vec<ApObservation>) -> Result<Self> {
        if ts < 0 {
            return Err(Error::InvalidRecord(format!("negative timestamp {ts}")));
        }
        if user.as_str().is_empty() {
            return Err(Error::InvalidRecord("empty user identifier".into()));
        }
        if let Some(ap) = aps.iter().find(|ap| ap.rssi > 0) {
            return Err(Error::InvalidRecord(format!(
                "positive RSSI {} for {}",
                ap.rssi, ap.bssid
            )));
        }
        // Strongest first within a BSSID, so dedup keeps the max.
        aps.sort_by(|a, b| a.bssid.cmp(&b.bssid).then(b.rssi.cmp(&a.rssi)));
        aps.dedup_by_key(|ap| ap.bssid);
        Ok(WifiScanRecord { user, ts, aps })
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn ts(&self) -> i64 {
        self.ts
    }

    /// Observations sorted by BSSID, at most one per BSSID.
    pub fn aps(&self) -> &[ApObservation] {
        &self.aps
    }

    pub fn max_rssi(&self) -> Option<i32> {
        self.aps.iter().map(|ap| ap.rssi).max()
    }

    pub(crate) fn retain_aps(&mut self, keep: impl FnMut(&ApObservation) -> bool) {
        self.aps.retain(keep);
    }
}

impl<'de> Deserialize<'de> for WifiScanRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawScan::deserialize(deserializer)?;
        validate_record(raw).map_err(serde::de::Error::custom)
    }
}

/// Turns a wire scan into a validated record: lowercases BSSIDs, collapses
/// duplicates to the strongest RSSI and rejects records without a timestamp.
pub fn validate_record(raw: RawScan) -> Result<WifiScanRecord> {
    let ts = raw.ts.ok_or_else(|| Error::InvalidRecord("missing timestamp".into()))?;
    let aps = raw
        .aps
        .into_iter()
        .map(|ap| {
            // Hex parsing is case-insensitive; Display renders lowercase.
            let bssid: Bssid = ap.bssid.parse()?;
            Ok(ApObservation {
                bssid,
                ssid: ap.ssid,
                rssi: ap.rssi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    WifiScanRecord::new(UserId::new(raw.user), ts, aps)
}

/// Ground-truth proximity observation made by a scanning phone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BluetoothSighting {
    pub user: UserId,
    pub ts: i64,
    /// Set only when the sighted device belongs to a participant.
    pub peer: Option<UserId>,
    pub mac: Option<Bssid>,
    pub rssi: i32,
}

impl BluetoothSighting {
    pub fn validate(&self) -> Result<()> {
        if self.rssi > 0 {
            return Err(Error::InvalidRecord(format!("positive RSSI {}", self.rssi)));
        }
        if self.ts < 0 {
            return Err(Error::InvalidRecord(format!("negative timestamp {}", self.ts)));
        }
        if self.peer.is_none() && self.mac.is_none() {
            return Err(Error::InvalidRecord("sighting without peer or mac".into()));
        }
        Ok(())
    }

    /// The sighted participant, unless it is the scanner itself.
    pub fn participant(&self) -> Option<&UserId> {
        self.peer.as_ref().filter(|p| **p != self.user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Proximate,
    NotProximate,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Proximate
    }
}

/// Two co-temporal scans from distinct users.
///
/// `scan_a` and `scan_b` index into the scan table the pair was generated
/// from; `user_a < user_b` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub user_a: UserId,
    pub user_b: UserId,
    pub scan_a: usize,
    pub scan_b: usize,
    pub ts_a: i64,
    pub ts_b: i64,
    pub ts: i64,
    pub label: Label,
    pub bt_rssi: Option<i32>,
}

impl CandidatePair {
    pub fn is_positive(&self) -> bool {
        self.label.is_positive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommonAp {
    pub bssid: Bssid,
    pub rssi_a: i32,
    pub rssi_b: i32,
}

/// The access points two scans share, plus the counts each sees alone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapView {
    pub common: Vec<CommonAp>,
    pub only_a: usize,
    pub only_b: usize,
}

impl OverlapView {
    pub fn swapped(&self) -> OverlapView {
        OverlapView {
            common: self
                .common
                .iter()
                .map(|c| CommonAp {
                    bssid: c.bssid,
                    rssi_a: c.rssi_b,
                    rssi_b: c.rssi_a,
                })
                .collect(),
            only_a: self.only_b,
            only_b: self.only_a,
        }
    }

    pub fn union_len(&self) -> usize {
        self.common.len() + self.only_a + self.only_b
    }
}

pub fn intersect(scan_a: &WifiScanRecord, scan_b: &WifiScanRecord) -> OverlapView {
    let (a, b) = (scan_a.aps(), scan_b.aps());
    let mut view = OverlapView::default();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].bssid.cmp(&b[j].bssid) {
            Ordering::Less => {
                view.only_a += 1;
                i += 1;
            }
            Ordering::Greater => {
                view.only_b += 1;
                j += 1;
            }
            Ordering::Equal => {
                view.common.push(CommonAp {
                    bssid: a[i].bssid,
                    rssi_a: a[i].rssi,
                    rssi_b: b[j].rssi,
                });
                i += 1;
                j += 1;
            }
        }
    }
    view.only_a += a.len() - i;
    view.only_b += b.len() - j;
    view
}

/// Number of shared BSSIDs without materializing the overlap.
pub fn overlap_count(scan_a: &WifiScanRecord, scan_b: &WifiScanRecord) -> usize {
    let (a, b) = (scan_a.aps(), scan_b.aps());
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].bssid.cmp(&b[j].bssid) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mac(last: u8) -> Bssid {
        Bssid::from_u64(u64::from(last)).unwrap()
    }

    fn scan(user: &str, aps: &[(u8, i32)]) -> WifiScanRecord {
        let aps = aps.iter().map(|&(b, r)| ApObservation::new(mac(b), "", r)).collect();
        WifiScanRecord::new(user.into(), 0, aps).unwrap()
    }

    #[test]
    fn bssid_canonical_form() {
        let raw = RawScan {
            user: "u".into(),
            ts: Some(1),
            aps: vec![RawAp {
                bssid: "AA:BB:CC:DD:EE:FF".into(),
                ssid: "x".into(),
                rssi: -40,
            }],
        };
        let rec = validate_record(raw).unwrap();
        assert_eq!(rec.aps()[0].bssid.to_string(), "aa:bb:cc:dd:ee:ff");
        assert!("aa:bb:cc:dd:ee".parse::<Bssid>().is_err());
        assert!("aa:bb:cc:dd:ee:fg".parse::<Bssid>().is_err());
        assert!("aa:bb:cc:dd:ee:ff:00".parse::<Bssid>().is_err());
        assert!("aabb:cc:dd:ee:ff".parse::<Bssid>().is_err());
    }

    #[test]
    fn duplicate_bssid_keeps_strongest() {
        let rec = scan("u", &[(1, -60), (1, -50)]);
        assert_eq!(rec.aps().len(), 1);
        assert_eq!(rec.aps()[0].rssi, -50);
    }

    #[test]
    fn empty_scan_is_valid() {
        let rec = scan("u", &[]);
        assert!(rec.aps().is_empty());
    }

    #[test]
    fn missing_timestamp_rejected() {
        let raw = RawScan {
            user: "u".into(),
            ts: None,
            aps: vec![],
        };
        assert!(validate_record(raw).is_err());
    }

    #[test]
    fn positive_rssi_rejected() {
        let aps = vec![ApObservation::new(mac(1), "", 3)];
        assert!(WifiScanRecord::new("u".into(), 0, aps).is_err());
    }

    #[test]
    fn intersect_partial_overlap() {
        // x=1, y=2, z=3
        let a = scan("a", &[(1, -50), (2, -70)]);
        let b = scan("b", &[(1, -60), (3, -40)]);
        let v = intersect(&a, &b);
        assert_eq!(
            v.common,
            vec![CommonAp {
                bssid: mac(1),
                rssi_a: -50,
                rssi_b: -60
            }]
        );
        assert_eq!((v.only_a, v.only_b), (1, 1));
        assert_eq!(overlap_count(&a, &b), 1);
    }

    #[test]
    fn intersect_identity() {
        let a = scan("a", &[(1, -50)]);
        let v = intersect(&a, &a);
        assert_eq!(v.common.len(), 1);
        assert_eq!((v.common[0].rssi_a, v.common[0].rssi_b), (-50, -50));
        assert_eq!((v.only_a, v.only_b), (0, 0));
    }

    #[test]
    fn json_round_trip_validates() {
        let line = r#"{"user":"u1","ts":5,"aps":[{"bssid":"00:00:00:00:00:0A","ssid":"n","rssi":-70},{"bssid":"00:00:00:00:00:0a","ssid":"n","rssi":-60}]}"#;
        let rec: WifiScanRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.aps().len(), 1);
        assert_eq!(rec.aps()[0].rssi, -60);
        let back = serde_json::to_string(&rec).unwrap();
        assert!(back.contains("00:00:00:00:00:0a"));
    }
}
