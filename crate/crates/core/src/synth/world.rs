//! Static layout (routers, households, buildings, venues) and the per-slot
//! schedule that places every agent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use smol_str::SmolStr;

use super::radio::{hash, unit};
use super::WorldConfig;
use crate::error::{Error, Result};
use crate::model::Bssid;
use crate::rng::stream_rng;

pub const SLOT_S: i64 = 1800;
pub const SLOTS_PER_DAY: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pos {
    pub x: f64,
    pub y: f64,
}

impl Pos {
    pub fn dist(self, o: Pos) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterKind {
    Campus,
    Residential,
    Downtown,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub bssid: Bssid,
    /// Names this radio may broadcast; one is picked per scan.
    pub ssids: Vec<SmolStr>,
    pub pos: Pos,
    pub kind: RouterKind,
}

#[derive(Debug, Clone)]
pub struct Building {
    pub origin: Pos,
    pub width: f64,
    pub height: f64,
    pub rooms: Vec<Pos>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub routers: Vec<Router>,
    pub buildings: Vec<Building>,
    pub venues: Vec<Pos>,
    /// Household router index per user.
    pub home_router: Vec<usize>,
    pub cohort: Vec<usize>,
    pub cohort_building: Vec<usize>,
    pub friend_group: Vec<usize>,
    pub friend_groups: Vec<Vec<usize>>,
    pub downtown: (Pos, Pos),
    pub planted_ambiguous: Vec<Bssid>,
}

const CAMPUS_SSIDS: [&str; 4] = ["dtu", "eduroam", "dtu-guest", "dtu-lab"];
const BUILDING_W: f64 = 120.0;
const BUILDING_H: f64 = 60.0;
const BUILDING_PITCH: f64 = 180.0;
const CAMPUS_ORIGIN: Pos = Pos { x: 0.0, y: 0.0 };
const RESIDENTIAL_ORIGIN: Pos = Pos { x: 0.0, y: 3000.0 };
const DOWNTOWN_ORIGIN: Pos = Pos { x: 3000.0, y: 0.0 };
const NOWHERE: Pos = Pos {
    x: -20_000.0,
    y: -20_000.0,
};

fn jittered_grid(n: usize, spacing: f64, jitter: f64, origin: Pos, aspect: f64, seed: u64, tag: u64) -> Vec<Pos> {
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).max(1);
    (0..n)
        .map(|i| {
            let (c, r) = (i % cols, i / cols);
            let jx = (unit(hash(&[seed, tag, i as u64, 0])) * 2.0 - 1.0) * jitter;
            let jy = (unit(hash(&[seed, tag, i as u64, 1])) * 2.0 - 1.0) * jitter;
            Pos {
                x: origin.x + (c as f64 + 0.5) * spacing + jx,
                y: origin.y + (r as f64 + 0.5) * spacing + jy,
            }
        })
        .collect()
}

fn bssid(kind: u64, i: usize) -> Bssid {
    Bssid::from_u64(0x0200_0000_0000 | (kind << 24) | i as u64).expect("48-bit")
}

fn household_sizes(cfg: &WorldConfig) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = cfg.n_users;
    let mut i = 0u64;
    while left > 0 {
        let u = unit(hash(&[cfg.seed, 0x4853, i]));
        let mut acc = 0.0;
        let mut size = cfg.household_size_probs.len();
        for (k, p) in cfg.household_size_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                size = k + 1;
                break;
            }
        }
        let size = size.min(left);
        sizes.push(size);
        left -= size;
        i += 1;
    }
    sizes
}

impl World {
    pub fn build(cfg: &WorldConfig) -> Result<World> {
        let seed = cfg.seed;
        let households = household_sizes(cfg);
        let n_campus = (cfg.campus_fraction * cfg.n_routers as f64).round() as usize;
        let n_ambiguous = cfg.ambiguous_groups * cfg.ambiguous_group_size;
        let n_res = ((cfg.residential_fraction * cfg.n_routers as f64).round() as usize).max(households.len());
        let used = n_campus + n_ambiguous + n_res;
        if used + 1 > cfg.n_routers {
            return Err(Error::InvalidParameter(format!(
                "{} routers cannot hold {} campus, {n_ambiguous} ambiguous and {n_res} residential routers",
                cfg.n_routers, n_campus
            )));
        }
        let n_downtown = cfg.n_routers - used;
        let mut routers = Vec::with_capacity(cfg.n_routers);

        // Campus: buildings on a square grid, routers on a grid inside each.
        let n_buildings = (n_campus / cfg.routers_per_building.max(1)).max(usize::from(n_campus > 0));
        let cols = (n_buildings as f64).sqrt().ceil().max(1.0) as usize;
        let mut buildings = Vec::with_capacity(n_buildings);
        for b in 0..n_buildings {
            let origin = Pos {
                x: CAMPUS_ORIGIN.x + (b % cols) as f64 * BUILDING_PITCH,
                y: CAMPUS_ORIGIN.y + (b / cols) as f64 * BUILDING_PITCH,
            };
            let rooms = (0..6)
                .map(|r| Pos {
                    x: origin.x + BUILDING_W * (1 + 2 * (r % 3)) as f64 / 6.0,
                    y: origin.y + BUILDING_H * (1 + 2 * (r / 3)) as f64 / 4.0,
                })
                .collect();
            buildings.push(Building {
                origin,
                width: BUILDING_W,
                height: BUILDING_H,
                rooms,
            });
        }
        for i in 0..n_campus {
            let b = i % n_buildings;
            let k = i / n_buildings;
            let per = n_campus / n_buildings + usize::from(b < n_campus % n_buildings);
            let cols = ((per as f64 * BUILDING_W / BUILDING_H).sqrt().ceil() as usize).max(1);
            let rows = per.div_ceil(cols);
            let o = buildings[b].origin;
            let jx = (unit(hash(&[seed, 0xca, i as u64, 0])) - 0.5) * 4.0;
            let jy = (unit(hash(&[seed, 0xca, i as u64, 1])) - 0.5) * 4.0;
            let n_names = 1 + (hash(&[seed, 0xcb, i as u64]) % 4) as usize;
            routers.push(Router {
                bssid: bssid(1, i),
                ssids: CAMPUS_SSIDS[..n_names].iter().map(SmolStr::new).collect(),
                pos: Pos {
                    x: o.x + BUILDING_W * ((k % cols) as f64 + 0.5) / cols as f64 + jx,
                    y: o.y + BUILDING_H * ((k / cols) as f64 + 0.5) / rows as f64 + jy,
                },
                kind: RouterKind::Campus,
            });
        }

        // Residential grid; participant homes take a random subset of points.
        let res_start = routers.len();
        for (i, pos) in jittered_grid(
            n_res,
            cfg.residential_spacing_m,
            2.0,
            RESIDENTIAL_ORIGIN,
            1.0,
            seed,
            0x5e,
        )
        .into_iter()
        .enumerate()
        {
            routers.push(Router {
                bssid: bssid(2, i),
                ssids: vec![SmolStr::new(format!("home-{i}"))],
                pos,
                kind: RouterKind::Residential,
            });
        }
        let mut slots: Vec<usize> = (res_start..res_start + n_res).collect();
        slots.shuffle(&mut stream_rng(seed, 0x5f));
        let mut home_router = Vec::with_capacity(cfg.n_users);
        for (h, &size) in households.iter().enumerate() {
            home_router.extend(std::iter::repeat_n(slots[h], size));
        }

        // Downtown grid of shops, cafes and venues.
        let dt_points = jittered_grid(
            n_downtown,
            cfg.downtown_spacing_m,
            4.0,
            DOWNTOWN_ORIGIN,
            1.0,
            seed,
            0xd0,
        );
        let dt_cols = (n_downtown as f64).sqrt().ceil();
        let dt_far = Pos {
            x: DOWNTOWN_ORIGIN.x + dt_cols * cfg.downtown_spacing_m,
            y: DOWNTOWN_ORIGIN.y + (n_downtown as f64 / dt_cols).ceil() * cfg.downtown_spacing_m,
        };
        for (i, pos) in dt_points.into_iter().enumerate() {
            routers.push(Router {
                bssid: bssid(3, i),
                ssids: vec![SmolStr::new(format!("cafe-{i}"))],
                pos,
                kind: RouterKind::Downtown,
            });
        }

        // Ambiguous radios: one MAC shared by several devices, each with its
        // own name, scattered downtown.
        let mut planted_ambiguous = Vec::new();
        for g in 0..cfg.ambiguous_groups {
            let mac = bssid(4, g);
            planted_ambiguous.push(mac);
            for m in 0..cfg.ambiguous_group_size {
                let ux = unit(hash(&[seed, 0xa0, g as u64, m as u64, 0]));
                let uy = unit(hash(&[seed, 0xa0, g as u64, m as u64, 1]));
                routers.push(Router {
                    bssid: mac,
                    ssids: vec![SmolStr::new(format!("hotspot-{g}-{m}"))],
                    pos: Pos {
                        x: DOWNTOWN_ORIGIN.x + ux * (dt_far.x - DOWNTOWN_ORIGIN.x),
                        y: DOWNTOWN_ORIGIN.y + uy * (dt_far.y - DOWNTOWN_ORIGIN.y),
                    },
                    kind: RouterKind::Ambiguous,
                });
            }
        }

        let venues = (0..cfg.n_venues)
            .map(|v| Pos {
                x: DOWNTOWN_ORIGIN.x + unit(hash(&[seed, 0x7e, v as u64, 0])) * (dt_far.x - DOWNTOWN_ORIGIN.x),
                y: DOWNTOWN_ORIGIN.y + unit(hash(&[seed, 0x7e, v as u64, 1])) * (dt_far.y - DOWNTOWN_ORIGIN.y),
            })
            .collect();

        let mut order: Vec<usize> = (0..cfg.n_users).collect();
        order.shuffle(&mut stream_rng(seed, 0xc0));
        let mut cohort = vec![0; cfg.n_users];
        for (k, &u) in order.iter().enumerate() {
            cohort[u] = k / cfg.cohort_size.max(1);
        }
        let n_cohorts = cohort.iter().max().map_or(0, |m| m + 1);
        let cohort_building = (0..n_cohorts)
            .map(|c| (hash(&[seed, 0xcb1, c as u64]) % n_buildings.max(1) as u64) as usize)
            .collect();

        order.shuffle(&mut stream_rng(seed, 0xf6));
        let mut friend_group = vec![0; cfg.n_users];
        let mut friend_groups: Vec<Vec<usize>> = Vec::new();
        for (k, &u) in order.iter().enumerate() {
            let g = k / cfg.friend_group_size.max(1);
            if g == friend_groups.len() {
                friend_groups.push(Vec::new());
            }
            friend_groups[g].push(u);
            friend_group[u] = g;
        }

        Ok(World {
            routers,
            buildings,
            venues,
            home_router,
            cohort,
            cohort_building,
            friend_group,
            friend_groups,
            downtown: (DOWNTOWN_ORIGIN, dt_far),
            planted_ambiguous,
        })
    }

    pub fn home_bssid(&self, user: usize) -> Bssid {
        self.routers[self.home_router[user]].bssid
    }
}

#[derive(Clone, Copy)]
enum Activity {
    Home,
    Class,
    Lunch,
    CampusStudy,
    Downtown,
    Out,
    Visit,
    Transit,
}

/// Uniform point in a disk.
fn in_disk(center: Pos, radius: f64, h: u64) -> Pos {
    let r = radius * unit(h).sqrt();
    let a = std::f64::consts::TAU * unit(crate::rng::derive_seed(h, 7));
    Pos {
        x: center.x + r * a.cos(),
        y: center.y + r * a.sin(),
    }
}

fn in_rect(lo: Pos, hi: Pos, h: u64) -> Pos {
    Pos {
        x: lo.x + unit(h) * (hi.x - lo.x),
        y: lo.y + unit(crate::rng::derive_seed(h, 3)) * (hi.y - lo.y),
    }
}

impl World {
    fn class_block(slot: usize) -> Option<usize> {
        match slot {
            16..=19 => Some(0),
            20..=23 => Some(1),
            26..=29 => Some(2),
            30..=31 => Some(3),
            _ => None,
        }
    }

    fn activity(&self, cfg: &WorldConfig, u: usize, day: usize, slot: usize) -> Activity {
        let s = cfg.seed;
        let (uu, d, sl) = (u as u64, day as u64, slot as u64);
        let weekday = day % 7;
        let r = |tag: u64, a: u64, b: u64, c: u64| unit(hash(&[s, tag, a, b, c]));
        let group = self.friend_group[u] as u64;

        let evening = (38..=45).contains(&slot);
        if evening {
            let goes = r(0xe0, group, d, 0) < cfg.evening_out_prob[weekday];
            if goes && r(0xe1, uu, d, 0) < cfg.attend_prob {
                return Activity::Out;
            }
        }
        let awake = (16..=45).contains(&slot);
        if awake && r(0x77, uu, d, sl) < cfg.transit_prob {
            return Activity::Transit;
        }
        if evening {
            return Activity::Home;
        }

        if weekday < 5 {
            let c = self.cohort[u] as u64;
            if let Some(block) = Self::class_block(slot) {
                let class = r(0xc1, c, d, block as u64) < cfg.class_prob;
                if class && r(0xc2, uu, d, block as u64) < cfg.attend_prob {
                    return Activity::Class;
                }
                let x = r(0xc3, uu, d, block as u64);
                return if x < cfg.campus_study_prob {
                    Activity::CampusStudy
                } else if x < cfg.campus_study_prob + cfg.errand_prob {
                    Activity::Downtown
                } else {
                    Activity::Home
                };
            }
            match slot {
                24..=25 if r(0x1c, uu, d, 0) < cfg.lunch_prob => Activity::Lunch,
                24..=25 => Activity::CampusStudy,
                32..=35 if r(0xa5, uu, d, 0) < cfg.afternoon_study_prob => Activity::CampusStudy,
                _ => Activity::Home,
            }
        } else if (20..=35).contains(&slot) {
            let block = (slot - 20) / 4;
            let x = r(0x3e, uu, d, block as u64);
            if x < cfg.weekend_visit_prob {
                Activity::Visit
            } else if x < cfg.weekend_visit_prob + cfg.weekend_downtown_prob {
                Activity::Downtown
            } else {
                Activity::Home
            }
        } else {
            Activity::Home
        }
    }

    /// Where user `u` spends half-hour `slot` of `day`.
    pub fn position(&self, cfg: &WorldConfig, u: usize, day: usize, slot: usize) -> Pos {
        let s = cfg.seed;
        let (uu, d, sl) = (u as u64, day as u64, slot as u64);
        let jitter = hash(&[s, 0x90, uu, d, sl]);
        let home = |router: usize| in_disk(self.routers[router].pos, cfg.apartment_radius_m, jitter);
        match self.activity(cfg, u, day, slot) {
            Activity::Home => home(self.home_router[u]),
            Activity::Class => {
                let c = self.cohort[u];
                let block = Self::class_block(slot).unwrap_or(0) as u64;
                let h = hash(&[s, 0xc4, c as u64, d, block]);
                let b = if unit(h) < 0.8 {
                    self.cohort_building[c]
                } else {
                    (h % self.buildings.len() as u64) as usize
                };
                let rooms = &self.buildings[b].rooms;
                // Room 0 is the lounge.
                let room = 1 + (crate::rng::derive_seed(h, 1) % (rooms.len() as u64 - 1)) as usize;
                in_disk(rooms[room], cfg.class_radius_m, jitter)
            }
            Activity::Lunch => {
                let b = &self.buildings[self.cohort_building[self.cohort[u]]];
                in_disk(b.rooms[0], cfg.lounge_radius_m, jitter)
            }
            Activity::CampusStudy => {
                let b = &self.buildings[(hash(&[s, 0x57, uu, d, sl / 4]) % self.buildings.len() as u64) as usize];
                let hi = Pos {
                    x: b.origin.x + b.width,
                    y: b.origin.y + b.height,
                };
                in_rect(b.origin, hi, jitter)
            }
            Activity::Downtown => in_rect(self.downtown.0, self.downtown.1, hash(&[s, 0xd7, uu, d, sl / 2])),
            Activity::Out => {
                let g = self.friend_group[u] as u64;
                let v = (hash(&[s, 0xe2, g, d]) % self.venues.len() as u64) as usize;
                in_disk(self.venues[v], cfg.venue_radius_m, jitter)
            }
            Activity::Visit => {
                let members = &self.friend_groups[self.friend_group[u]];
                let host = members[(hash(&[s, 0x71, uu, d, (sl - 20) / 4]) % members.len() as u64) as usize];
                home(self.home_router[host])
            }
            Activity::Transit => in_rect(
                NOWHERE,
                Pos {
                    x: NOWHERE.x + 2000.0,
                    y: NOWHERE.y + 2000.0,
                },
                jitter,
            ),
        }
    }
}
