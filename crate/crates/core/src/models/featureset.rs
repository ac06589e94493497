use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::{feature_index, FEATURE_NAMES, NUM_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "AP_PRESENCE")]
    ApPresence,
    #[serde(rename = "RSSI")]
    Rssi,
    #[serde(rename = "PRESENCE_RSSI")]
    PresenceRssi,
    #[serde(rename = "POPULARITY")]
    Popularity,
    #[serde(rename = "LOCATION")]
    Location,
    #[serde(rename = "TIMING")]
    Timing,
    #[serde(rename = "NEARME")]
    NearMe,
    #[serde(rename = "SIMPLE")]
    Simple,
    #[serde(rename = "GENERAL")]
    General,
    #[serde(rename = "FULL")]
    Full,
}

const AP_PRESENCE: &[&str] = &["overlap", "non_overlap", "union", "jaccard"];
const RSSI: &[&str] = &["spearman", "pearson", "manhattan", "euclidean"];
const PRESENCE_RSSI: &[&str] = &["top_ap", "top_ap_6db"];
const POPULARITY: &[&str] = &["min_popularity", "max_popularity", "adamic_adar"];
const LOCATION: &[&str] = &["at_home", "at_campus"];
const TIMING: &[&str] = &["hour_of_week"];
const NEARME: &[&str] = &["overlap", "non_overlap", "spearman", "euclidean"];

impl FeatureSet {
    pub const ALL: [FeatureSet; 10] = [
        FeatureSet::ApPresence,
        FeatureSet::Rssi,
        FeatureSet::PresenceRssi,
        FeatureSet::Popularity,
        FeatureSet::Location,
        FeatureSet::Timing,
        FeatureSet::NearMe,
        FeatureSet::Simple,
        FeatureSet::General,
        FeatureSet::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::ApPresence => "AP_PRESENCE",
            FeatureSet::Rssi => "RSSI",
            FeatureSet::PresenceRssi => "PRESENCE_RSSI",
            FeatureSet::Popularity => "POPULARITY",
            FeatureSet::Location => "LOCATION",
            FeatureSet::Timing => "TIMING",
            FeatureSet::NearMe => "NEARME",
            FeatureSet::Simple => "SIMPLE",
            FeatureSet::General => "GENERAL",
            FeatureSet::Full => "FULL",
        }
    }

    /// Member column indices in canonical feature order.
    pub fn columns(self) -> Vec<usize> {
        let groups: &[&[&str]] = match self {
            FeatureSet::ApPresence => &[AP_PRESENCE],
            FeatureSet::Rssi => &[RSSI],
            FeatureSet::PresenceRssi => &[PRESENCE_RSSI],
            FeatureSet::Popularity => &[POPULARITY],
            FeatureSet::Location => &[LOCATION],
            FeatureSet::Timing => &[TIMING],
            FeatureSet::NearMe => &[NEARME],
            FeatureSet::Simple => &[AP_PRESENCE, RSSI, PRESENCE_RSSI],
            FeatureSet::General => &[AP_PRESENCE, RSSI, PRESENCE_RSSI, POPULARITY, &["at_home"]],
            FeatureSet::Full => return (0..NUM_FEATURES).collect(),
        };
        let mut cols: Vec<usize> = groups
            .iter()
            .flat_map(|g| g.iter())
            .map(|n| feature_index(n).expect("known feature"))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn feature_names(self) -> Vec<String> {
        self.columns()
            .into_iter()
            .map(|c| FEATURE_NAMES[c].to_string())
            .collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown featureset `{s}`")))
    }
}
