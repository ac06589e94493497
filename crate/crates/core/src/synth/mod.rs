//! Deterministic synthetic world: routers in a plane, agents following
//! weekly schedules, WiFi scans from a log-distance radio model, and
//! Bluetooth sightings with the ground truth that produced them.

mod radio;
mod world;

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BluetoothScanLine, SeenDevice};
use crate::model::{ApObservation, Bssid, CandidatePair, UserId, WifiScanRecord};
use crate::rng::stream_rng;
use crate::stats::median;

pub use radio::RadioConfig;
pub use world::{Pos, Router, RouterKind, World, SLOTS_PER_DAY, SLOT_S};

use radio::{gauss, hash, shadow_field, unit};

/// Monday 2013-09-02 00:00 in UTC+1.
pub const DEFAULT_START_TS: i64 = 1_378_076_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_routers: usize,
    pub n_users: usize,
    pub days: usize,
    pub scan_period_s: i64,
    /// Local midnight starting the first simulated day.
    pub start_ts: i64,
    pub tz_offset_s: i32,
    pub campus_fraction: f64,
    pub residential_fraction: f64,
    pub ambiguous_groups: usize,
    pub ambiguous_group_size: usize,
    pub n_venues: usize,
    pub radio: RadioConfig,
    /// Probability of 1, 2, 3, ... participants per household.
    pub household_size_probs: Vec<f64>,
    pub cohort_size: usize,
    pub friend_group_size: usize,
    pub class_prob: f64,
    pub attend_prob: f64,
    pub lunch_prob: f64,
    pub campus_study_prob: f64,
    pub errand_prob: f64,
    pub afternoon_study_prob: f64,
    /// Per weekday, Monday first.
    pub evening_out_prob: [f64; 7],
    pub weekend_visit_prob: f64,
    pub weekend_downtown_prob: f64,
    pub transit_prob: f64,
    pub routers_per_building: usize,
    pub residential_spacing_m: f64,
    pub downtown_spacing_m: f64,
    pub apartment_radius_m: f64,
    pub class_radius_m: f64,
    pub lounge_radius_m: f64,
    pub venue_radius_m: f64,
    /// Chance that a Bluetooth scan also picks up a non-participant device.
    pub stray_device_prob: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 1,
            n_routers: 500,
            n_users: 200,
            days: 7,
            scan_period_s: 300,
            start_ts: DEFAULT_START_TS,
            tz_offset_s: 3600,
            campus_fraction: 0.4,
            residential_fraction: 0.42,
            ambiguous_groups: 5,
            ambiguous_group_size: 6,
            n_venues: 15,
            radio: RadioConfig::default(),
            household_size_probs: vec![0.75, 0.2, 0.05],
            cohort_size: 4,
            friend_group_size: 4,
            class_prob: 0.55,
            attend_prob: 0.85,
            lunch_prob: 0.4,
            campus_study_prob: 0.15,
            errand_prob: 0.1,
            afternoon_study_prob: 0.1,
            evening_out_prob: [0.12, 0.12, 0.15, 0.2, 0.45, 0.45, 0.1],
            weekend_visit_prob: 0.15,
            weekend_downtown_prob: 0.15,
            transit_prob: 0.05,
            routers_per_building: 16,
            residential_spacing_m: 32.0,
            downtown_spacing_m: 35.0,
            apartment_radius_m: 4.0,
            class_radius_m: 5.0,
            lounge_radius_m: 12.0,
            venue_radius_m: 3.0,
            stray_device_prob: 0.3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_users == 0 || self.n_routers == 0 || self.days == 0 || self.n_venues == 0 {
            return bad("counts must be positive");
        }
        if self.scan_period_s <= 0 || SLOT_S % self.scan_period_s != 0 {
            return bad("scan period must divide the half-hour slot");
        }
        if self.cohort_size == 0 || self.friend_group_size == 0 || self.routers_per_building == 0 {
            return bad("group sizes must be positive");
        }
        let lengths = [
            self.residential_spacing_m,
            self.downtown_spacing_m,
            self.apartment_radius_m,
            self.class_radius_m,
            self.lounge_radius_m,
            self.venue_radius_m,
        ];
        if lengths.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || self.residential_spacing_m == 0.0 {
            return bad("spacings and radii must be finite and non-negative");
        }
        let probs = [
            self.campus_fraction,
            self.residential_fraction,
            self.class_prob,
            self.attend_prob,
            self.lunch_prob,
            self.campus_study_prob,
            self.errand_prob,
            self.afternoon_study_prob,
            self.weekend_visit_prob,
            self.weekend_downtown_prob,
            self.transit_prob,
            self.stray_device_prob,
            self.radio.bt_detect_prob,
        ];
        let all = probs
            .iter()
            .chain(&self.evening_out_prob)
            .chain(&self.household_size_probs);
        if all.clone().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.campus_study_prob + self.errand_prob > 1.0 || self.weekend_visit_prob + self.weekend_downtown_prob > 1.0
        {
            return bad("activity probabilities sum above one");
        }
        let total: f64 = self.household_size_probs.iter().sum();
        if self.household_size_probs.is_empty() || (total - 1.0).abs() > 1e-9 {
            return bad("household size probabilities must sum to one");
        }
        if self.campus_fraction > 0.0 && self.campus_fraction * (self.n_routers as f64) < 1.0 {
            return bad("campus fraction yields no campus routers");
        }
        let share = |f: f64| (f * self.n_routers as f64).round() as usize;
        let reserved = share(self.campus_fraction)
            + share(self.residential_fraction)
            + self.ambiguous_groups * self.ambiguous_group_size;
        if reserved >= self.n_routers {
            return bad("campus, residential and ambiguous routers leave none for downtown");
        }
        Ok(())
    }

    pub fn n_ticks(&self) -> usize {
        self.days * 86_400 / self.scan_period_s as usize
    }

    /// Share of scans expected to land in transit (and hence see nothing):
    /// `transit_prob` applies to the 30 daytime slots not claimed by an
    /// evening out.
    pub fn expected_transit_fraction(&self) -> f64 {
        let mut share = 0.0;
        for d in 0..self.days {
            let out = self.evening_out_prob[d % 7] * self.attend_prob;
            // Slots 16..=37 always eligible; 38..=45 only when staying in.
            share += self.transit_prob * (22.0 + 8.0 * (1.0 - out));
        }
        share / (self.days * SLOTS_PER_DAY) as f64
    }
}

/// A fixed cast: routers, agents and one position per agent per slot.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub start_ts: i64,
    pub n_ticks: usize,
    pub scan_period_s: i64,
    pub slot_s: i64,
    pub radio: RadioConfig,
    pub routers: Vec<Router>,
    pub users: Vec<UserId>,
    /// `positions[slot][user]`.
    pub positions: Vec<Vec<Pos>>,
    pub wifi_phase: Vec<i64>,
    pub bt_phase: Vec<i64>,
    pub stray_device_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStep {
    pub ts: i64,
    /// Pairs within Bluetooth range, with distance in meters.
    pub pairs: Vec<(UserId, UserId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthHome {
    pub user: UserId,
    pub home_bssid: Bssid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meeting {
    pub user_a: UserId,
    pub user_b: UserId,
    /// First tick in range.
    pub start: i64,
    /// End of the last tick in range (exclusive).
    pub end: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub steps: Vec<TruthStep>,
    pub homes: Vec<TruthHome>,
}

impl GroundTruth {
    /// Maximal runs of consecutive in-range ticks per pair.
    pub fn meetings(&self, tick_s: i64) -> Vec<Meeting> {
        let mut open: BTreeMap<(UserId, UserId), (i64, i64)> = BTreeMap::new();
        let mut done = Vec::new();
        for step in &self.steps {
            for (a, b, _) in &step.pairs {
                let key = (a.clone(), b.clone());
                match open.get_mut(&key) {
                    Some(run) if run.1 == step.ts => run.1 = step.ts + tick_s,
                    Some(run) => {
                        let (start, end) = *run;
                        done.push(Meeting {
                            user_a: a.clone(),
                            user_b: b.clone(),
                            start,
                            end,
                        });
                        *run = (step.ts, step.ts + tick_s);
                    }
                    None => {
                        open.insert(key, (step.ts, step.ts + tick_s));
                    }
                }
            }
        }
        done.extend(open.into_iter().map(|((a, b), (start, end))| Meeting {
            user_a: a,
            user_b: b,
            start,
            end,
        }));
        done.sort_by(|x, y| (&x.user_a, &x.user_b, x.start).cmp(&(&y.user_a, &y.user_b, y.start)));
        done
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub wifi: Vec<WifiScanRecord>,
    pub bluetooth: Vec<BluetoothScanLine>,
    pub truth: GroundTruth,
}

fn user_ids(n: usize) -> Vec<UserId> {
    let width = (n.max(2) - 1).to_string().len().max(3);
    (0..n).map(|i| UserId::new(format!("u{i:0width$}"))).collect()
}

impl Scenario {
    fn slot_of(&self, ts: i64) -> usize {
        let s = (ts - self.start_ts).div_euclid(self.slot_s).max(0) as usize;
        s.min(self.positions.len() - 1)
    }

    fn wifi_scan(&self, u: usize, k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<WifiScanRecord> {
        let ts = self.start_ts + k as i64 * self.scan_period_s + self.wifi_phase[u];
        let p = self.positions[self.slot_of(ts)][u];
        let cutoff = self.radio.cutoff_m();
        let mut aps = Vec::new();
        for (r, router) in self.routers.iter().enumerate() {
            let d = p.dist(router.pos);
            if d > cutoff {
                continue;
            }
            let shadow =
                self.radio.shadow_sigma_db * shadow_field(self.seed, r as u64, p.x, p.y, self.radio.shadow_corr_m);
            let noise: f64 = StandardNormal.sample(rng);
            let rssi = self.radio.mean_rssi(d) + shadow + self.radio.noise_sigma_db * noise;
            if rssi >= self.radio.wifi_detect_floor_dbm {
                let pick = hash(&[self.seed, 0x551d, r as u64, u as u64, k as u64]) as usize % router.ssids.len();
                aps.push(ApObservation::new(
                    router.bssid,
                    &router.ssids[pick],
                    (rssi.round() as i32).min(0),
                ));
            }
        }
        WifiScanRecord::new(self.users[u].clone(), ts, aps)
    }

    fn bt_scan(&self, u: usize, k: usize) -> Option<BluetoothScanLine> {
        let ts = self.start_ts + k as i64 * self.scan_period_s + self.bt_phase[u];
        let here = &self.positions[self.slot_of(ts)];
        let mut seen = Vec::new();
        for v in 0..self.users.len() {
            if v == u {
                continue;
            }
            let d = here[u].dist(here[v]);
            let h = hash(&[self.seed, 0xb7, u as u64, v as u64, k as u64]);
            if d <= self.radio.bt_range_m && unit(h) < self.radio.bt_detect_prob {
                let rssi = self.radio.bt_mean_rssi(d) + self.radio.bt_noise_sigma_db * gauss(derive(h));
                seen.push(SeenDevice {
                    peer: Some(self.users[v].clone()),
                    mac: None,
                    rssi: (rssi.round() as i32).min(0),
                });
            }
        }
        let h = hash(&[self.seed, 0x5a, u as u64, k as u64]);
        if unit(h) < self.stray_device_prob {
            seen.push(SeenDevice {
                peer: None,
                mac: Bssid::from_u64(0x0a00_0000_0000 | (derive(h) % 1000)),
                rssi: -95 + (derive(derive(h)) % 30) as i32,
            });
        }
        (!seen.is_empty()).then(|| BluetoothScanLine {
            user: self.users[u].clone(),
            ts,
            seen,
        })
    }

    /// Scans for every agent, ordered by (user, ts).
    pub fn simulate(&self) -> Result<Simulation> {
        if self.positions.is_empty() || self.positions.iter().any(|p| p.len() != self.users.len()) {
            return Err(Error::InvalidParameter(
                "positions must cover every user per slot".into(),
            ));
        }
        let per_user = crate::par::map_indexed(self.users.len(), |u| -> Result<_> {
            let mut rng = stream_rng(self.seed, 0xf000 + u as u64);
            let mut wifi = Vec::with_capacity(self.n_ticks);
            let mut bt = Vec::new();
            for k in 0..self.n_ticks {
                wifi.push(self.wifi_scan(u, k, &mut rng)?);
                bt.extend(self.bt_scan(u, k));
            }
            Ok((wifi, bt))
        });
        let mut wifi = Vec::with_capacity(self.users.len() * self.n_ticks);
        let mut bluetooth = Vec::new();
        for r in per_user {
            let (w, b) = r?;
            wifi.extend(w);
            bluetooth.extend(b);
        }

        let slot_pairs: Vec<Vec<(UserId, UserId, f64)>> = crate::par::map_slice(&self.positions, |pos| {
            let mut pairs = Vec::new();
            for a in 0..pos.len() {
                for b in a + 1..pos.len() {
                    let d = pos[a].dist(pos[b]);
                    if d <= self.radio.bt_range_m {
                        pairs.push((
                            self.users[a].clone(),
                            self.users[b].clone(),
                            (d * 100.0).round() / 100.0,
                        ));
                    }
                }
            }
            pairs
        });
        let steps = (0..self.n_ticks)
            .map(|k| {
                let ts = self.start_ts + k as i64 * self.scan_period_s;
                TruthStep {
                    ts,
                    pairs: slot_pairs[self.slot_of(ts)].clone(),
                }
            })
            .collect();
        Ok(Simulation {
            wifi,
            bluetooth,
            truth: GroundTruth {
                steps,
                homes: Vec::new(),
            },
        })
    }
}

fn derive(h: u64) -> u64 {
    crate::rng::derive_seed(h, 0x11)
}

/// Build the default-style world for `config` and simulate it.
pub fn generate(config: &WorldConfig) -> Result<(World, Simulation)> {
    config.validate()?;
    let world = World::build(config)?;
    let users = user_ids(config.n_users);
    let n_slots = config.days * SLOTS_PER_DAY;
    let positions = crate::par::map_indexed(n_slots, |slot| {
        (0..config.n_users)
            .map(|u| world.position(config, u, slot / SLOTS_PER_DAY, slot % SLOTS_PER_DAY))
            .collect()
    });
    let phase = |tag: u64| -> Vec<i64> {
        (0..config.n_users)
            .map(|u| (hash(&[config.seed, tag, u as u64]) % config.scan_period_s as u64) as i64)
            .collect()
    };
    let scenario = Scenario {
        seed: config.seed,
        start_ts: config.start_ts,
        n_ticks: config.n_ticks(),
        scan_period_s: config.scan_period_s,
        slot_s: SLOT_S,
        radio: config.radio,
        routers: world.routers.clone(),
        users: users.clone(),
        positions,
        wifi_phase: phase(0x3f1),
        bt_phase: phase(0x3f2),
        stray_device_prob: config.stray_device_prob,
    };
    let mut sim = scenario.simulate()?;
    sim.truth.homes = users
        .iter()
        .enumerate()
        .map(|(u, id)| TruthHome {
            user: id.clone(),
            home_bssid: world.home_bssid(u),
        })
        .collect();
    Ok((world, sim))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub n_scans: usize,
    pub mean_aps: f64,
    pub median_aps: f64,
    pub empty_fraction: f64,
    pub n_candidates: usize,
    pub positive_fraction: f64,
    /// Histogram of overlap counts (index = overlap, last bin open-ended).
    pub overlap_proximate: Vec<usize>,
    pub overlap_non_proximate: Vec<usize>,
}

const OVERLAP_BINS: usize = 41;

pub fn calibrate_stats(scans: &[WifiScanRecord], candidates: &[CandidatePair]) -> CalibrationSummary {
    let counts: Vec<f64> = scans.iter().map(|s| s.aps().len() as f64).collect();
    let n = scans.len();
    let mut prox = vec![0; OVERLAP_BINS];
    let mut nonprox = vec![0; OVERLAP_BINS];
    for c in candidates {
        let ov = crate::model::overlap_count(&scans[c.scan_a], &scans[c.scan_b]).min(OVERLAP_BINS - 1);
        if c.is_positive() {
            prox[ov] += 1;
        } else {
            nonprox[ov] += 1;
        }
    }
    let positives: usize = prox.iter().sum();
    CalibrationSummary {
        n_scans: n,
        mean_aps: if n == 0 {
            0.0
        } else {
            counts.iter().sum::<f64>() / n as f64
        },
        median_aps: if n == 0 { 0.0 } else { median(&counts) },
        empty_fraction: if n == 0 {
            0.0
        } else {
            counts.iter().filter(|&&c| c == 0.0).count() as f64 / n as f64
        },
        n_candidates: candidates.len(),
        positive_fraction: if candidates.is_empty() {
            0.0
        } else {
            positives as f64 / candidates.len() as f64
        },
        overlap_proximate: prox,
        overlap_non_proximate: nonprox,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinned(n_routers: usize, distance: f64) -> Scenario {
        let users = user_ids(2);
        Scenario {
            seed: 3,
            start_ts: 0,
            n_ticks: 12,
            scan_period_s: 300,
            slot_s: SLOT_S,
            radio: RadioConfig {
                bt_detect_prob: 1.0,
                ..RadioConfig::default()
            },
            routers: (0..n_routers)
                .map(|i| Router {
                    bssid: Bssid::from_u64(i as u64 + 1).unwrap(),
                    ssids: vec!["r".into()],
                    pos: Pos { x: 5.0, y: 5.0 },
                    kind: RouterKind::Downtown,
                })
                .collect(),
            users,
            positions: vec![vec![Pos { x: 0.0, y: 0.0 }, Pos { x: distance, y: 0.0 }]; 2],
            wifi_phase: vec![0, 10],
            bt_phase: vec![5, 20],
            stray_device_prob: 0.0,
        }
    }

    #[test]
    fn pinned_pair_sees_each_other_every_scan() {
        let sim = pinned(0, 1.0).simulate().unwrap();
        for user in ["u000", "u001"] {
            let n: usize = sim
                .bluetooth
                .iter()
                .filter(|l| l.user.as_str() == user)
                .map(|l| l.seen.len())
                .sum();
            assert_eq!(n, 12);
        }
        assert_eq!(sim.truth.steps.len(), 12);
        let meetings = sim.truth.meetings(300);
        assert_eq!(meetings.len(), 1);
        assert_eq!((meetings[0].start, meetings[0].end), (0, 3600));
    }

    #[test]
    fn empty_area_yields_empty_scans() {
        let sim = pinned(0, 50.0).simulate().unwrap();
        assert!(sim.wifi.iter().all(|s| s.aps().is_empty()));
        assert!(sim.bluetooth.is_empty());
    }

    #[test]
    fn single_router_world() {
        let sim = pinned(1, 1.0).simulate().unwrap();
        let summary = calibrate_stats(&sim.wifi, &[]);
        assert!(summary.mean_aps <= 1.0);
        assert_eq!(summary.n_scans, 24);
    }

    #[test]
    fn small_world_is_deterministic() {
        let cfg = WorldConfig {
            n_users: 12,
            n_routers: 200,
            days: 1,
            ..WorldConfig::default()
        };
        let (_, a) = generate(&cfg).unwrap();
        let (_, b) = generate(&cfg).unwrap();
        assert_eq!(a.wifi, b.wifi);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.wifi.len(), 12 * 288);
    }

    #[test]
    fn validation() {
        let bad = WorldConfig {
            class_prob: 1.5,
            ..WorldConfig::default()
        };
        assert!(bad.validate().is_err());
        let tiny = WorldConfig {
            n_routers: 50,
            ..WorldConfig::default()
        };
        assert!(generate(&tiny).is_err());
    }
}
