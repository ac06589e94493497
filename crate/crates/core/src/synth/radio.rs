use serde::{Deserialize, Serialize};

use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// Received power at 1 m, dBm.
    pub p0_dbm: f64,
    pub path_loss_exponent: f64,
    /// Spatially correlated shadowing, dB.
    pub shadow_sigma_db: f64,
    /// Lattice spacing of the shadowing field, meters.
    pub shadow_corr_m: f64,
    /// Independent per-scan noise, dB.
    pub noise_sigma_db: f64,
    pub wifi_detect_floor_dbm: f64,
    pub bt_range_m: f64,
    pub bt_detect_prob: f64,
    pub bt_p0_dbm: f64,
    pub bt_noise_sigma_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            p0_dbm: -35.0,
            path_loss_exponent: 3.5,
            shadow_sigma_db: 2.0,
            shadow_corr_m: 4.0,
            noise_sigma_db: 6.5,
            wifi_detect_floor_dbm: -90.0,
            bt_range_m: 10.0,
            bt_detect_prob: 0.75,
            bt_p0_dbm: -45.0,
            bt_noise_sigma_db: 2.0,
        }
    }
}

impl RadioConfig {
    pub fn mean_rssi(&self, d: f64) -> f64 {
        self.p0_dbm - 10.0 * self.path_loss_exponent * d.max(1.0).log10()
    }

    /// Distance beyond which a router stays under the floor unless the
    /// combined noise exceeds four standard deviations.
    pub fn cutoff_m(&self) -> f64 {
        let spread = 4.0 * self.shadow_sigma_db.hypot(self.noise_sigma_db);
        10f64.powf((self.p0_dbm - self.wifi_detect_floor_dbm + spread) / (10.0 * self.path_loss_exponent))
    }

    pub fn bt_mean_rssi(&self, d: f64) -> f64 {
        self.bt_p0_dbm - 20.0 * d.max(0.5).log10()
    }
}

pub(crate) fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243f_6a88_85a3_08d3, |h, &p| derive_seed(h, p))
}

pub(crate) fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Standard normal from a hash (Box-Muller on two derived uniforms).
pub(crate) fn gauss(h: u64) -> f64 {
    let u1 = 1.0 - unit(h);
    let u2 = unit(derive_seed(h, 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unit-variance value noise: standard normals on a square lattice blended
/// bilinearly and renormalized, so nearby points see similar values.
pub(crate) fn shadow_field(seed: u64, router: u64, x: f64, y: f64, spacing: f64) -> f64 {
    let (gx, gy) = (x / spacing, y / spacing);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - ix, gy - iy);
    let (ix, iy) = (ix as i64 as u64, iy as i64 as u64);
    let corner = |dx: u64, dy: u64| gauss(hash(&[seed, 0x5ad0, router, ix.wrapping_add(dx), iy.wrapping_add(dy)]));
    let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
    let v = w[0] * corner(0, 0) + w[1] * corner(1, 0) + w[2] * corner(0, 1) + w[3] * corner(1, 1);
    v / w.iter().map(|a| a * a).sum::<f64>().sqrt()
}
