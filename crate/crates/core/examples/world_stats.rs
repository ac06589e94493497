//! Summary statistics of a generated world, for tuning `WorldConfig`.

use std::time::Instant;

use wifiprox::evaluation::auc_roc;
use wifiprox::pipeline::{flatten_bluetooth, labels, prepare, PrepConfig};
use wifiprox::synth::{calibrate_stats, generate, WorldConfig};

fn main() -> wifiprox::Result<()> {
    // Optional JSON object of WorldConfig overrides.
    let cfg: WorldConfig = match std::env::args().nth(1) {
        Some(json) => serde_json::from_str(&json).expect("WorldConfig JSON"),
        None => WorldConfig::default(),
    };
    let t = Instant::now();
    let (world, sim) = generate(&cfg)?;
    eprintln!("generate: {:.1?}", t.elapsed());
    let sightings = flatten_bluetooth(&sim.bluetooth);
    let mut prep_cfg = PrepConfig::default();
    prep_cfg.features.tz_offset_s = cfg.tz_offset_s;
    let t = Instant::now();
    let prep = prepare(sim.wifi, &sightings, &prep_cfg)?;
    eprintln!("prepare: {:.1?}", t.elapsed());

    let summary = calibrate_stats(&prep.scans, &prep.candidates);
    println!(
        "scans {}  mean aps {:.2}  median {:.1}  empty {:.3}",
        summary.n_scans, summary.mean_aps, summary.median_aps, summary.empty_fraction
    );
    println!(
        "candidates {}  positive {:.3}",
        summary.n_candidates, summary.positive_fraction
    );
    println!("cleaning {:?}", prep.cleaning);

    let correct = sim
        .truth
        .homes
        .iter()
        .filter(|h| {
            prep.homes
                .entries()
                .iter()
                .any(|e| e.user == h.user && e.bssid == h.home_bssid)
        })
        .count();
    println!(
        "homes {correct}/{}  planted {}",
        sim.truth.homes.len(),
        world.planted_ambiguous.len()
    );

    let y = labels(&prep.candidates);
    let mut groups = std::collections::BTreeMap::new();
    for (v, &l) in prep.features.iter().zip(&y) {
        let e = groups
            .entry((
                v.at_campus,
                v.at_home,
                v.hour_of_week % 24 >= 8 && v.hour_of_week % 24 < 18,
            ))
            .or_insert((0usize, 0usize));
        e.0 += 1;
        e.1 += usize::from(l);
    }
    for (k, (n, p)) in groups {
        println!("campus/home/daytime {k:?}: {n} candidates, {p} positive");
    }
    for (name, idx) in wifiprox::features::FEATURE_NAMES.iter().zip(0..) {
        let s: Vec<f64> = prep.features.iter().map(|v| v.values()[idx].unwrap_or(0.0)).collect();
        let a = auc_roc(&s, &y)?;
        println!("{name:>15} auc {:.3}", a.max(1.0 - a));
    }
    Ok(())
}
