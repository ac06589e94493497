//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p wifiprox --test acceptance`. The end-to-end
//! criteria share one default-sized world, so the whole target takes a few
//! minutes.

use std::collections::{BTreeSet, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::beta::beta_reg;

use wifiprox::config::PipelineConfig;
use wifiprox::evaluation::{auc_roc, learning_curve, miss_rate_vs_bt_rssi, LearningCurveSpec, DEFAULT_RSSI_BIN_DB};
use wifiprox::features::{
    extract, fit_imputation, FeatureConfig, FeatureContext, FeatureVector, PopularityIndex, FEATURE_NAMES, NUM_FEATURES,
};
use wifiprox::ingest::{filter_ambiguous_macs, HomeEntry, HomeRouterMap};
use wifiprox::io;
use wifiprox::model::{ApObservation, Bssid, CandidatePair, Label, UserId, WifiScanRecord};
use wifiprox::models::{f1_score, fit_threshold, FeatureSet, Hyperparameters, Matrix, ModelKind, TreeEnsembleModel};
use wifiprox::pairing::{build_candidates, split_train_test};
use wifiprox::pipeline::{
    self, flatten_bluetooth, holdout, labels, pick_rows, score_rows, single_feature_results, split_rows, Holdout,
    Split, Tuning,
};
use wifiprox::rng::derive_seed;
use wifiprox::stats;
use wifiprox::synth::{generate, TruthHome};
use wifiprox::time::MonthKey;

type Check = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(n: usize, outcome: Check, passed: &mut usize) {
    match outcome {
        Ok(d) => {
            *passed += 1;
            println!("criterion {n}: PASS  {d}");
        }
        Err(d) => println!("criterion {n}: FAIL  {d}"),
    }
}

// ---------------------------------------------------------------------------
// Random scan pairs shared by criteria 1 and 3.

const TZ: i32 = 3600;
const BASE_TS: i64 = 1_380_000_000;
const SSIDS: [&str; 5] = ["dtu", "eduroam", "home", "cafe", ""];

struct Fixture {
    scans: Vec<WifiScanRecord>,
    pairs: Vec<CandidatePair>,
    homes: HomeRouterMap,
    config: FeatureConfig,
}

/// Civil (year, month) of a day count since 1970-01-01.
fn civil_month(days: i64) -> (i32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    (year as i32, month as u32)
}

fn local_days(ts: i64) -> i64 {
    (ts + i64::from(TZ)).div_euclid(86_400)
}

fn month_key(ts: i64) -> MonthKey {
    let (year, month) = civil_month(local_days(ts));
    MonthKey { year, month }
}

fn random_aps(rng: &mut ChaCha8Rng, pool: &[Bssid], k: usize) -> Vec<ApObservation> {
    let picked = sample(rng, pool.len(), k).into_vec();
    picked
        .into_iter()
        .map(|i| ApObservation::new(pool[i], SSIDS[i % SSIDS.len()], rng.random_range(-95..=-30)))
        .collect()
}

fn fixture(n_pairs: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<UserId> = (0..12).map(|i| UserId::new(format!("u{i:02}"))).collect();
    let pool: Vec<Bssid> = (0..60)
        .map(|_| Bssid::from_u64(rng.random_range(1..=Bssid::MAX)).unwrap())
        .collect();
    let mut scans = Vec::new();
    let mut pairs = Vec::new();
    for _ in 0..n_pairs {
        let ia = rng.random_range(0..users.len());
        let ib = (ia + rng.random_range(1..users.len())) % users.len();
        let (ia, ib) = (ia.min(ib), ia.max(ib));
        let ts_a = BASE_TS + rng.random_range(0..30 * 86_400);
        let ts_b = ts_a + rng.random_range(-300..=300);

        let k_a = rng.random_range(0..=12);
        let aps_a = random_aps(&mut rng, &pool, k_a);
        let share: f64 = rng.random();
        let mode = rng.random_range(0..4);
        let mut aps_b: Vec<ApObservation> = Vec::new();
        for ap in &aps_a {
            if rng.random::<f64>() < share {
                let rssi = match mode {
                    0 => rng.random_range(-95..=-30),
                    1 => (ap.rssi + rng.random_range(-3..=3)).min(-1),
                    2 => -60,
                    _ => -125 - ap.rssi,
                };
                aps_b.push(ApObservation::new(ap.bssid, ap.ssid.as_str(), rssi));
            }
        }
        let taken: HashSet<Bssid> = aps_b
            .iter()
            .map(|a| a.bssid)
            .chain(aps_a.iter().map(|a| a.bssid))
            .collect();
        for i in 0..pool.len() {
            if !taken.contains(&pool[i]) && rng.random::<f64>() < 0.05 {
                aps_b.push(ApObservation::new(
                    pool[i],
                    SSIDS[i % SSIDS.len()],
                    rng.random_range(-95..=-30),
                ));
            }
        }

        // Bystanders near the same instant change router popularity.
        for _ in 0..rng.random_range(0..=2) {
            let u = &users[rng.random_range(0..users.len())];
            let t = ts_a + rng.random_range(-400..=400);
            let k = rng.random_range(1..=8);
            let aps = random_aps(&mut rng, &pool, k);
            scans.push(WifiScanRecord::new(u.clone(), t, aps).unwrap());
        }

        let scan_a = scans.len();
        scans.push(WifiScanRecord::new(users[ia].clone(), ts_a, aps_a).unwrap());
        scans.push(WifiScanRecord::new(users[ib].clone(), ts_b, aps_b).unwrap());
        pairs.push(CandidatePair {
            user_a: users[ia].clone(),
            user_b: users[ib].clone(),
            scan_a,
            scan_b: scan_a + 1,
            ts_a,
            ts_b,
            ts: ts_a.min(ts_b),
            label: Label::NotProximate,
            bt_rssi: None,
        });
    }

    let months: BTreeSet<MonthKey> = pairs.iter().map(|p| month_key(p.ts)).collect();
    let mut entries = Vec::new();
    for u in &users {
        for &month in &months {
            if rng.random::<f64>() < 0.7 {
                entries.push(HomeEntry {
                    user: u.clone(),
                    month,
                    bssid: pool[rng.random_range(0..pool.len())],
                });
            }
        }
    }
    Fixture {
        scans,
        pairs,
        homes: HomeRouterMap::from_entries(entries),
        config: FeatureConfig {
            tz_offset_s: TZ,
            ..FeatureConfig::default()
        },
    }
}

// ---------------------------------------------------------------------------
// Brute-force feature oracle.

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(x: &[f64], y: &[f64], alpha: f64) -> Option<f64> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    let df = (n - 2) as f64;
    // Two-sided Student t tail through the regularized incomplete beta.
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t2 = r * r * df / (1.0 - r * r);
        beta_reg(df / 2.0, 0.5, df / (df + t2))
    };
    (p < alpha).then_some(r.clamp(-1.0, 1.0))
}

fn brute_popularity(scans: &[WifiScanRecord], bssid: Bssid, ts: i64, w: i64) -> usize {
    let mut users = HashSet::new();
    for s in scans {
        if (s.ts() - ts).abs() <= w && s.aps().iter().any(|a| a.bssid == bssid) {
            users.insert(s.user().clone());
        }
    }
    users.len()
}

fn oracle(f: &Fixture, p: &CandidatePair) -> [Option<f64>; NUM_FEATURES] {
    let cfg = &f.config;
    let a = f.scans[p.scan_a].aps();
    let b = f.scans[p.scan_b].aps();
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    let mut common = Vec::new();
    for x in a {
        for y in b {
            if x.bssid == y.bssid {
                ra.push(f64::from(x.rssi));
                rb.push(f64::from(y.rssi));
                common.push(x.bssid);
            }
        }
    }
    let overlap = common.len();
    let union = a.len() + b.len() - overlap;
    let jaccard = if union == 0 { 0.0 } else { overlap as f64 / union as f64 };

    let spearman = brute_pearson(&brute_ranks(&ra), &brute_ranks(&rb), cfg.alpha);
    let pearson = brute_pearson(&ra, &rb, cfg.alpha);
    let (mut l1, mut l2) = (0.0, 0.0);
    for i in 0..overlap {
        l1 += (ra[i] - rb[i]).abs();
        l2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    }
    let (manhattan, euclidean) = if overlap == 0 {
        (0.0, 0.0)
    } else {
        (l1 / overlap as f64, l2.sqrt() / overlap as f64)
    };

    let max_a = a.iter().map(|x| x.rssi).max();
    let max_b = b.iter().map(|x| x.rssi).max();
    let (mut top, mut near) = (false, false);
    if let (Some(ma), Some(mb)) = (max_a, max_b) {
        for i in 0..overlap {
            let (x, y) = (ra[i] as i32, rb[i] as i32);
            top |= x == ma && y == mb;
            near |= x >= ma - cfg.top_ap_tolerance_db && y >= mb - cfg.top_ap_tolerance_db;
        }
    }

    let pops: Vec<usize> = common
        .iter()
        .map(|&c| brute_popularity(&f.scans, c, p.ts, cfg.popularity_window_s))
        .collect();
    let min_pop = pops.iter().min().copied().unwrap_or(0);
    let max_pop = pops.iter().max().copied().unwrap_or(0);
    let aa: f64 = pops.iter().map(|&n| 1.0 / (n as f64).ln()).sum();

    let local = p.ts + i64::from(cfg.tz_offset_s);
    // 1970-01-01 was a Thursday; Monday is day 0.
    let weekday = (local.div_euclid(86_400) + 3).rem_euclid(7);
    let how = weekday * 24 + local.rem_euclid(86_400) / 3600;

    let month = month_key(p.ts);
    let homes: Vec<Bssid> = f
        .homes
        .entries()
        .into_iter()
        .filter(|e| e.month == month && (e.user == p.user_a || e.user == p.user_b))
        .map(|e| e.bssid)
        .collect();
    let at_home = a.iter().chain(b).any(|x| homes.contains(&x.bssid));
    let at_campus = a.iter().chain(b).any(|x| x.ssid == cfg.campus_marker);

    let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
    [
        Some(overlap as f64),
        Some((union - overlap) as f64),
        Some(union as f64),
        Some(jaccard),
        spearman,
        pearson,
        Some(manhattan),
        Some(euclidean),
        flag(top),
        flag(near),
        Some(how as f64),
        Some(min_pop as f64),
        Some(max_pop as f64),
        Some(aa),
        flag(at_home),
        flag(at_campus),
    ]
}

const REAL_VALUED: [usize; 6] = [3, 4, 5, 6, 7, 13];

fn same_value(i: usize, x: Option<f64>, y: Option<f64>, tol: f64) -> bool {
    match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) if REAL_VALUED.contains(&i) => (x - y).abs() <= tol,
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let f = fixture(1000, 11);
    let index = PopularityIndex::build(&f.scans);
    let ctx = FeatureContext {
        scans: &f.scans,
        popularity: &index,
        homes: &f.homes,
        config: &f.config,
    };
    let mut mismatches = Vec::new();
    let mut present_corr = 0;
    for (k, p) in f.pairs.iter().enumerate() {
        let got = extract(p, &ctx).map_err(|e| format!("pair {k}: {e}"))?.values();
        let want = oracle(&f, p);
        present_corr += usize::from(got[4].is_some()) + usize::from(got[5].is_some());
        for i in 0..NUM_FEATURES {
            if !same_value(i, got[i], want[i], 1e-9) {
                mismatches.push(format!("pair {k} {}: {:?} vs {:?}", FEATURE_NAMES[i], got[i], want[i]));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "1000 pairs, {} mismatches, {present_corr} significant correlations, {elapsed:.2?}{}",
        mismatches.len(),
        mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
    );
    verdict(mismatches.is_empty() && elapsed < Duration::from_secs(10), detail)
}

// ---------------------------------------------------------------------------

fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=1000);
    let rate: f64 = rng.random_range(0.05..0.95);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < rate).collect();
    labels[0] = true;
    labels[1] = false;
    let mode = rng.random_range(0..3);
    let scores = labels
        .iter()
        .map(|&l| match mode {
            0 => f64::from(rng.random_range(0..5)),
            1 => rng.random::<f64>(),
            _ => ((rng.random::<f64>() + if l { 0.4 } else { 0.0 }) * 10.0).round() / 10.0,
        })
        .collect();
    (scores, labels)
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn brute_best_f1(scores: &[f64], labels: &[bool]) -> f64 {
    let mut cuts: Vec<f64> = scores.to_vec();
    cuts.push(f64::NEG_INFINITY);
    cuts.push(f64::INFINITY);
    let mut best: f64 = 0.0;
    for &t in &cuts {
        for greater in [true, false] {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (&s, &l) in scores.iter().zip(labels) {
                let pred = if greater { s > t } else { s < t };
                match (pred, l) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
            if tp > 0.0 {
                best = best.max(2.0 * tp / (2.0 * tp + fp + fn_));
            }
        }
    }
    best
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut worst_auc, mut worst_f1) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (s, l) = random_scores(&mut rng);
        let auc = auc_roc(&s, &l).map_err(|e| e.to_string())?;
        worst_auc = worst_auc.max((auc - brute_auc(&s, &l)).abs());
    }
    for _ in 0..200 {
        let (s, l) = random_scores(&mut rng);
        let c = fit_threshold("x", &s, &l).map_err(|e| e.to_string())?;
        worst_f1 = worst_f1.max((f1_score(&c, &s, &l) - brute_best_f1(&s, &l)).abs());
    }
    verdict(
        worst_auc <= 1e-12 && worst_f1 <= 1e-12,
        format!("max AUC error {worst_auc:.1e}, max F1 gap {worst_f1:.1e} over 200 + 200 sets"),
    )
}

// ---------------------------------------------------------------------------

fn swapped(p: &CandidatePair) -> CandidatePair {
    CandidatePair {
        user_a: p.user_b.clone(),
        user_b: p.user_a.clone(),
        scan_a: p.scan_b,
        scan_b: p.scan_a,
        ts_a: p.ts_b,
        ts_b: p.ts_a,
        ..p.clone()
    }
}

fn criterion_3() -> Check {
    let f = fixture(10_000, 33);
    let index = PopularityIndex::build(&f.scans);
    let ctx = FeatureContext {
        scans: &f.scans,
        popularity: &index,
        homes: &f.homes,
        config: &f.config,
    };
    let mut broken: Vec<String> = Vec::new();
    for (k, p) in f.pairs.iter().enumerate() {
        let v = extract(p, &ctx).map_err(|e| e.to_string())?;
        let w = extract(&swapped(p), &ctx).map_err(|e| e.to_string())?;
        let checks = [
            ("overlap+non_overlap=union", v.overlap + v.non_overlap == v.union),
            (
                "jaccard*union=overlap",
                (v.jaccard * f64::from(v.union) - f64::from(v.overlap)).abs() <= 1e-9,
            ),
            ("euclidean<=manhattan", v.euclidean <= v.manhattan + 1e-12),
            ("top_ap=>top_ap_6db", !v.top_ap || v.top_ap_6db),
            ("swap symmetry", v == w),
        ];
        for (name, ok) in checks {
            if !ok {
                broken.push(format!("pair {k}: {name}"));
            }
        }
    }
    verdict(
        broken.is_empty(),
        format!(
            "10000 candidates, {} violations{}",
            broken.len(),
            broken.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------

fn vector(rng: &mut ChaCha8Rng, positive: bool, spearman: Option<f64>, pearson: Option<f64>) -> FeatureVector {
    let overlap = if positive {
        rng.random_range(3..8)
    } else {
        rng.random_range(0..4)
    };
    let non_overlap = rng.random_range(0..8);
    let union = overlap + non_overlap;
    let mut v = [None; NUM_FEATURES];
    v[0] = Some(f64::from(overlap));
    v[1] = Some(f64::from(non_overlap));
    v[2] = Some(f64::from(union));
    v[3] = Some(if union == 0 {
        0.0
    } else {
        f64::from(overlap) / f64::from(union)
    });
    v[4] = spearman;
    v[5] = pearson;
    v[6] = Some(rng.random_range(0.0..20.0));
    v[7] = Some(v[6].unwrap() / 2.0);
    v[8] = Some(0.0);
    v[9] = Some(f64::from(u8::from(positive)));
    v[10] = Some(f64::from(rng.random_range(0..168)));
    v[11] = Some(if overlap == 0 { 0.0 } else { 2.0 });
    v[12] = Some(if overlap == 0 { 0.0 } else { 5.0 });
    v[13] = Some(f64::from(overlap) / 2f64.ln());
    v[14] = Some(0.0);
    v[15] = Some(f64::from(u8::from(!positive)));
    FeatureVector::from_values(&v).unwrap()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    // Present training values average to exactly 0.5 and 0.25.
    let spearman_train = [Some(0.25), Some(0.5), None, Some(0.75)];
    let pearson_train = [Some(-0.5), None, Some(0.25), Some(1.0)];
    let mut train = Vec::new();
    let mut train_y = Vec::new();
    for i in 0..400 {
        let positive = i % 2 == 0;
        train.push(vector(&mut rng, positive, spearman_train[i % 4], pearson_train[i % 4]));
        train_y.push(positive);
    }
    let mut test = Vec::new();
    let mut test_y = Vec::new();
    for i in 0..100 {
        let positive = i % 3 == 0;
        let corr = (i % 2 == 0).then_some(-0.9);
        test.push(vector(&mut rng, positive, corr, corr));
        test_y.push(positive);
    }
    let state = fit_imputation(&train).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    if state.spearman_mean != 0.5 || state.pearson_mean != 0.25 {
        problems.push(format!("fitted means {} / {}", state.spearman_mean, state.pearson_mean));
    }

    let mut features = train.clone();
    features.extend(test.iter().cloned());
    let mut y = train_y.clone();
    y.extend(&test_y);
    let train_idx: Vec<usize> = (0..train.len()).collect();
    let test_idx: Vec<usize> = (train.len()..features.len()).collect();
    let split = split_rows(&features, &y, &train_idx, &test_idx).map_err(|e| e.to_string())?;
    for (row, v) in split.test_x.iter().zip(&test) {
        let want_s = v.spearman.unwrap_or(0.5);
        let want_p = v.pearson.unwrap_or(0.25);
        if row[4] != want_s || row[5] != want_p {
            problems.push(format!("test row imputed as {} / {}", row[4], row[5]));
            break;
        }
    }

    let outcome = pipeline::train_featureset(
        &split,
        FeatureSet::Full,
        ModelKind::GradientBoosted,
        Tuning::Fixed(Hyperparameters::gbt(20, 2, 0.1)),
        4,
    )
    .map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    outcome.model.save(&mut bytes).map_err(|e| e.to_string())?;
    let loaded = TreeEnsembleModel::load(bytes.as_slice()).map_err(|e| e.to_string())?;
    if loaded.imputation.spearman_mean != 0.5 || loaded.imputation.pearson_mean != 0.25 {
        problems.push("means changed across save/load".into());
    }
    let direct = loaded.predict(&test).map_err(|e| e.to_string())?;
    let manual = score_rows(&loaded, &split.test_x).map_err(|e| e.to_string())?;
    if direct != manual {
        problems.push("model imputation differs from the training means".into());
    }
    let refit = fit_imputation(&test).map_err(|e| e.to_string())?;
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "means 0.5 / 0.25 applied to test rows (test-set means would be {} / {})",
                refit.spearman_mean, refit.pearson_mean
            )
        } else {
            problems.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Default-world experiment shared by criteria 5 through 8 and 10.

struct Experiment {
    cfg: PipelineConfig,
    truth_homes: Vec<TruthHome>,
    homes: HomeRouterMap,
    candidates: Vec<CandidatePair>,
    features: Vec<FeatureVector>,
    labels: Vec<bool>,
    holdout: Holdout,
    split: Split,
    started: Instant,
}

fn experiment() -> wifiprox::Result<Experiment> {
    let started = Instant::now();
    let cfg = PipelineConfig::default();
    let (_, sim) = generate(&cfg.world())?;
    let sightings = flatten_bluetooth(&sim.bluetooth);
    let prep = pipeline::prepare(sim.wifi, &sightings, &cfg.prep())?;
    let y = labels(&prep.candidates);
    let h = holdout(y.len(), cfg.holdout_fraction, cfg.train_size, cfg.seed)?;
    let split = split_rows(&prep.features, &y, &h.train, &h.test)?;
    eprintln!(
        "default world: {} scans, {} candidates ({} positive), prepared in {:.1?}",
        prep.scans.len(),
        y.len(),
        y.iter().filter(|&&l| l).count(),
        started.elapsed()
    );
    Ok(Experiment {
        cfg,
        truth_homes: sim.truth.homes,
        homes: prep.homes,
        candidates: prep.candidates,
        features: prep.features,
        labels: y,
        holdout: h,
        split,
        started,
    })
}

fn test_auc(model: &TreeEnsembleModel, split: &Split) -> wifiprox::Result<f64> {
    auc_roc(&score_rows(model, &split.test_x)?, &split.test_y)
}

struct Tuned {
    full: TreeEnsembleModel,
    best: Hyperparameters,
}

fn criterion_5(e: &Experiment) -> (Check, Option<Tuned>) {
    let run = || -> wifiprox::Result<(Check, Tuned)> {
        let singles = single_feature_results(&e.split)?;
        let jaccard = singles
            .iter()
            .find(|s| s.classifier.feature_name == "jaccard")
            .expect("jaccard result")
            .test_auc;
        let grid = e.cfg.grid();
        let mut models = Vec::new();
        for fs in [FeatureSet::Full, FeatureSet::Simple, FeatureSet::NearMe] {
            let out = pipeline::train_featureset(
                &e.split,
                fs,
                ModelKind::GradientBoosted,
                Tuning::Grid {
                    grid: &grid,
                    folds: e.cfg.cv_folds,
                },
                e.cfg.seed,
            )?;
            let auc = test_auc(&out.model, &e.split)?;
            eprintln!(
                "{}: test AUC {auc:.4} with {:?}",
                fs.name(),
                out.model.ensemble.hyperparameters
            );
            models.push((out.model, auc));
        }
        let elapsed = e.started.elapsed();
        let (full, simple, nearme) = (models[0].1, models[1].1, models[2].1);
        let check = verdict(
            full >= jaccard && jaccard >= 0.75 && simple >= nearme - 0.01 && elapsed < Duration::from_secs(600),
            format!(
                "FULL {full:.4} vs jaccard {jaccard:.4}; SIMPLE {simple:.4} vs NEARME {nearme:.4}; {} candidates; {elapsed:.0?}",
                e.labels.len()
            ),
        );
        let full = models.swap_remove(0).0;
        let best = full.ensemble.hyperparameters;
        Ok((check, Tuned { full, best }))
    };
    match run() {
        Ok((c, t)) => (c, Some(t)),
        Err(err) => (Err(err.to_string()), None),
    }
}

fn criterion_6(e: &Experiment, t: &Tuned) -> wifiprox::Result<Check> {
    let cols = FeatureSet::Full.columns();
    let pool_split = split_rows(&e.features, &e.labels, &e.holdout.pool, &e.holdout.test)?;
    let pool_x = Matrix::from_imputed(&pool_split.train_x, &cols)?;
    let test_x = Matrix::from_imputed(&pool_split.test_x, &cols)?;
    let sizes = [100, 1000, 10_000, e.holdout.pool.len()];
    let curve = learning_curve(
        &pool_x,
        &pool_split.train_y,
        &test_x,
        &pool_split.test_y,
        &LearningCurveSpec {
            sizes: &sizes,
            repetitions: 20,
            models: &[(ModelKind::GradientBoosted, t.best)],
            seed: e.cfg.seed,
        },
    )?;
    let medians: Vec<f64> = curve.iter().map(|c| c.median).collect();
    let monotone = medians.windows(2).all(|w| w[1] >= w[0] - 0.01);
    let gain = medians[3] - medians[2];
    Ok(verdict(
        monotone && gain < 0.02,
        format!(
            "medians {} at sizes {:?}; 10^4 to full gain {gain:+.4}",
            medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" "),
            sizes
        ),
    ))
}

fn criterion_7(e: &Experiment, t: &Tuned) -> wifiprox::Result<Check> {
    let scores = score_rows(&t.full, &e.split.test_x)?;
    let (pos_scores, pos_rssi): (Vec<f64>, Vec<i32>) = e
        .holdout
        .test
        .iter()
        .zip(&scores)
        .filter_map(|(&i, &s)| e.candidates[i].bt_rssi.map(|r| (s, r)))
        .unzip();
    let classifier = t
        .full
        .operating_point
        .clone()
        .expect("trained model has an operating point");
    let bins = miss_rate_vs_bt_rssi(&pos_scores, &pos_rssi, &classifier, DEFAULT_RSSI_BIN_DB)?;
    let kept: Vec<_> = bins.iter().filter(|b| b.positives >= 30).collect();
    let centers: Vec<f64> = kept.iter().map(|b| b.center()).collect();
    let rates: Vec<f64> = kept.iter().map(|b| b.miss_rate.unwrap()).collect();
    let table = kept
        .iter()
        .map(|b| format!("[{},{}) {:.3}", b.lo, b.hi, b.miss_rate.unwrap()))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(match stats::spearman(&centers, &rates) {
        Some(c) => verdict(
            c.r < 0.0 && c.p_value < 0.05,
            format!(
                "spearman {:.3} (p {:.2e}) over {} bins: {table}",
                c.r,
                c.p_value,
                kept.len()
            ),
        ),
        None => Err(format!("correlation undefined over {} bins: {table}", kept.len())),
    })
}

fn criterion_8(e: &Experiment, t: &Tuned) -> wifiprox::Result<Check> {
    let rounds = 30;
    let mut top4 = 0;
    let mut worst_sum: f64 = 0.0;
    let mut ranks = Vec::new();
    for r in 0..rounds {
        let seed = derive_seed(e.cfg.seed, 0x1a9 + r as u64);
        let (picked, _) = split_train_test(e.holdout.pool.len(), e.cfg.train_size, seed)?;
        let train = pick_rows(&e.holdout.pool, &picked);
        let split = split_rows(&e.features, &e.labels, &train, &e.holdout.test)?;
        let out = pipeline::train_featureset(
            &split,
            FeatureSet::Full,
            ModelKind::GradientBoosted,
            Tuning::Fixed(t.best),
            seed,
        )?;
        let mut imp = out.model.feature_importance();
        worst_sum = worst_sum.max((imp.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs());
        imp.sort_by(|a, b| b.1.total_cmp(&a.1));
        let rank = imp.iter().position(|(n, _)| n == "jaccard").unwrap() + 1;
        if rank <= 4 {
            top4 += 1;
        }
        ranks.push(rank);
        if r == 0 {
            let top: Vec<String> = imp.iter().take(6).map(|(n, w)| format!("{n} {w:.3}")).collect();
            eprintln!("importance, round 0: {}", top.join(", "));
        }
    }
    Ok(verdict(
        worst_sum <= 1e-9 && top4 * 5 >= rounds * 4,
        format!("jaccard in top 4 in {top4}/{rounds} rounds (ranks {ranks:?}); max |sum - 1| {worst_sum:.1e}"),
    ))
}

// ---------------------------------------------------------------------------
// Determinism: every stage serialized twice, and at two thread counts.

fn stage_bytes(cfg: &PipelineConfig) -> wifiprox::Result<Vec<(&'static str, Vec<u8>)>> {
    let hash = cfg.hash();
    let mut out = Vec::new();
    let (_, sim) = generate(&cfg.world())?;
    let mut buf = Vec::new();
    io::write_jsonl(&mut buf, &hash, &sim.wifi)?;
    io::write_jsonl(&mut buf, &hash, &sim.bluetooth)?;
    io::write_truth(&mut buf, &hash, &sim.truth)?;
    out.push(("generate", buf));

    let prep = cfg.prep();
    let sightings = flatten_bluetooth(&sim.bluetooth);
    let (scans, cleaning, homes) = pipeline::clean(sim.wifi, &prep)?;
    let mut buf = Vec::new();
    io::write_jsonl(&mut buf, &hash, &scans)?;
    io::write_jsonl(&mut buf, &hash, &homes.entries())?;
    io::write_json(&mut buf, &cleaning)?;
    out.push(("clean", buf));

    let candidates = build_candidates(&scans, &sightings, prep.delta_t);
    let mut buf = Vec::new();
    io::write_candidates(&mut buf, &hash, &candidates)?;
    out.push(("pair", buf));

    let features = pipeline::featurize(&scans, &homes, &candidates, &prep.features)?;
    let mut buf = Vec::new();
    io::write_features(&mut buf, &hash, &candidates, &features)?;
    out.push(("featurize", buf));

    let y = labels(&candidates);
    let h = holdout(y.len(), cfg.holdout_fraction, cfg.train_size, cfg.seed)?;
    let split = split_rows(&features, &y, &h.train, &h.test)?;
    let mut buf = Vec::new();
    let mut evals = Vec::new();
    for kind in [ModelKind::GradientBoosted, ModelKind::RandomForest] {
        let grid = PipelineConfig {
            model: kind,
            ..cfg.clone()
        }
        .grid();
        let trained = pipeline::train_featureset(
            &split,
            cfg.featureset,
            kind,
            Tuning::Grid {
                grid: &grid,
                folds: cfg.cv_folds,
            },
            cfg.seed,
        )?;
        trained.model.save(&mut buf)?;
        io::write_json(&mut buf, &trained.cv)?;
        evals.push(score_rows(&trained.model, &split.test_x)?);
    }
    out.push(("train", buf));

    let mut buf = Vec::new();
    io::write_json(&mut buf, &evals)?;
    io::write_json(&mut buf, &single_feature_results(&split)?)?;
    out.push(("evaluate", buf));
    Ok(out)
}

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("n_users", "40"),
        ("n_routers", "200"),
        ("days", "2"),
        ("train_size", "3000"),
        ("grid_trees", "10,30"),
        ("grid_depth", "2,4"),
        ("cv_folds", "3"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_: usize, f: impl FnOnce() -> T + Send) -> T {
    f()
}

fn criterion_9() -> wifiprox::Result<Check> {
    let cfg = small_config();
    let wide = std::thread::available_parallelism().map_or(8, |n| n.get()).max(8);
    let runs = [
        with_threads(wide, || stage_bytes(&cfg))?,
        with_threads(wide, || stage_bytes(&cfg))?,
        with_threads(1, || stage_bytes(&cfg))?,
    ];
    let mut differing = Vec::new();
    for (i, (stage, bytes)) in runs[0].iter().enumerate() {
        if runs[1..].iter().any(|r| &r[i].1 != bytes) {
            differing.push(*stage);
        }
    }
    let sizes: Vec<String> = runs[0].iter().map(|(s, b)| format!("{s} {}B", b.len())).collect();
    Ok(verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("identical at {wide}, {wide} and 1 threads: {}", sizes.join(", "))
        } else {
            format!("stages differ: {differing:?}")
        },
    ))
}

// ---------------------------------------------------------------------------

fn ambiguity_fixture() -> (Vec<WifiScanRecord>, HashSet<Bssid>) {
    let mac = |n: u64| Bssid::from_u64(0x0200_0000_0000 + n).unwrap();
    // (mac, distinct names, planted)
    let plan: [(u64, usize, bool); 8] = [
        (1, 5, true),
        (2, 6, true),
        (3, 9, true),
        (4, 4, false),
        (5, 1, false),
        (6, 3, false),
        (7, 5, true),
        (8, 2, false),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let users: Vec<UserId> = (0..5).map(|i| UserId::new(format!("p{i}"))).collect();
    let mut scans = Vec::new();
    for (n, &(m, names, _)) in plan.iter().enumerate() {
        // Each name shows up several times, spread over users and scans.
        for rep in 0..3 {
            for k in 0..names {
                // The empty name counts as one of the five.
                let ssid = if m == 7 && k == 0 {
                    String::new()
                } else {
                    format!("net{m}-{k}")
                };
                let mut aps = vec![ApObservation::new(mac(m), ssid, rng.random_range(-90..=-40))];
                aps.push(ApObservation::new(mac(100 + n as u64), "stable", -50));
                let ts = BASE_TS + (rep * 100 + k) as i64 * 60;
                scans.push(WifiScanRecord::new(users[(k + rep) % users.len()].clone(), ts, aps).unwrap());
            }
        }
    }
    let planted = plan.iter().filter(|p| p.2).map(|p| mac(p.0)).collect();
    (scans, planted)
}

fn criterion_10(e: &Experiment) -> wifiprox::Result<Check> {
    let (scans, planted) = ambiguity_fixture();
    let before: Vec<(usize, Bssid)> = scans
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.aps().iter().map(move |a| (i, a.bssid)))
        .collect();
    let (kept, cleaning) = filter_ambiguous_macs(scans, 5)?;
    let after: HashSet<(usize, Bssid)> = kept
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.aps().iter().map(move |a| (i, a.bssid)))
        .collect();
    let removed: HashSet<Bssid> = before.iter().filter(|o| !after.contains(o)).map(|o| o.1).collect();
    let leftover_planted = before
        .iter()
        .filter(|o| after.contains(o) && planted.contains(&o.1))
        .count();
    let exact = removed == planted && leftover_planted == 0 && cleaning.ambiguous_macs == planted.len();

    let detected = e.homes.entries();
    let correct = e
        .truth_homes
        .iter()
        .filter(|h| {
            let mine: Vec<_> = detected.iter().filter(|d| d.user == h.user).collect();
            !mine.is_empty() && mine.iter().all(|d| d.bssid == h.home_bssid)
        })
        .count();
    let rate = correct as f64 / e.truth_homes.len() as f64;
    Ok(verdict(
        exact && rate >= 0.95,
        format!(
            "removed {} of {} planted MACs ({} observations), homes {correct}/{} ({:.1}%)",
            removed.len(),
            planted.len(),
            cleaning.removed_observations,
            e.truth_homes.len(),
            100.0 * rate
        ),
    ))
}

fn main() -> ExitCode {
    let mut passed = 0;
    report(1, criterion_1(), &mut passed);
    report(2, criterion_2(), &mut passed);
    report(3, criterion_3(), &mut passed);
    report(4, criterion_4(), &mut passed);

    let flat = |r: wifiprox::Result<Check>| r.unwrap_or_else(|e| Err(e.to_string()));
    match experiment() {
        Ok(e) => {
            let (c5, tuned) = criterion_5(&e);
            report(5, c5, &mut passed);
            match tuned {
                Some(t) => {
                    report(6, flat(criterion_6(&e, &t)), &mut passed);
                    report(7, flat(criterion_7(&e, &t)), &mut passed);
                    report(8, flat(criterion_8(&e, &t)), &mut passed);
                }
                None => {
                    for n in 6..=8 {
                        report(n, Err("no tuned model".into()), &mut passed);
                    }
                }
            }
            report(9, flat(criterion_9()), &mut passed);
            report(10, flat(criterion_10(&e)), &mut passed);
        }
        Err(err) => {
            for n in 5..=8 {
                report(n, Err(format!("experiment failed: {err}")), &mut passed);
            }
            report(9, flat(criterion_9()), &mut passed);
            report(10, Err(format!("experiment failed: {err}")), &mut passed);
        }
    }
    println!("{passed}/10 criteria passed");
    if passed == 10 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
