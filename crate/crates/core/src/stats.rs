//! Correlation coefficients with two-sided t-test significance, plus the
//! small rank and percentile helpers used throughout evaluation.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Two-sided p-value of `r` under H0: rho = 0, using t = r sqrt(n-2) / sqrt(1-r^2)
/// with n-2 degrees of freedom. A perfect correlation has p = 0.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    assert!(n >= 3, "t-test needs at least three observations");
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t)).min(1.0)
}

/// `None` for fewer than three pairs or when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<Correlation> {
    assert_eq!(x.len(), y.len());
    if x.len() < 3 || is_constant(x) || is_constant(y) {
        return None;
    }
    let r = pearson_r(x, y);
    Some(Correlation {
        r,
        p_value: correlation_p_value(r, x.len()),
    })
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<Correlation> {
    assert_eq!(x.len(), y.len());
    if x.len() < 3 || is_constant(x) || is_constant(y) {
        return None;
    }
    let r = pearson_r(&average_ranks(x), &average_ranks(y));
    Some(Correlation {
        r,
        p_value: correlation_p_value(r, x.len()),
    })
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn perfect_monotone_is_significant() {
        let a = [-40.0, -50.0, -60.0];
        let b = [-45.0, -55.0, -65.0];
        let s = spearman(&a, &b).unwrap();
        assert_eq!(s.r, 1.0);
        assert_eq!(s.p_value, 0.0);
        let p = pearson(&a, &b).unwrap();
        assert!((p.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_or_constant_is_undefined() {
        assert!(pearson(&[1.0, 2.0], &[2.0, 1.0]).is_none());
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        assert!(pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).is_none());
    }

    #[test]
    fn p_value_matches_reference() {
        // r = 0.5, n = 10: t = 1.63299, df = 8, two-sided p = 0.14121
        let p = correlation_p_value(0.5, 10);
        assert!((p - 0.141_21).abs() < 1e-4, "{p}");
        // Spearman +-0.5 is the only non-perfect value for n = 3 (df = 1).
        let p3 = correlation_p_value(0.5, 3);
        assert!((p3 - 0.666_67).abs() < 1e-4, "{p3}");
    }

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&v, 50.0), 2.5);
        assert_eq!(percentile_sorted(&v, 25.0), 1.75);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
