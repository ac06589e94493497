use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    GreaterIsPositive,
    LessIsPositive,
}

/// Single-feature cutoff. Predicts positive when the score is strictly on the
/// positive side of `threshold`; thresholds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub feature_name: String,
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub direction: Direction,
}

impl ThresholdClassifier {
    pub fn predict(&self, score: f64) -> bool {
        match self.direction {
            Direction::GreaterIsPositive => score > self.threshold,
            Direction::LessIsPositive => score < self.threshold,
        }
    }

    /// Score flipped so that larger always means "more positive".
    pub fn oriented(&self, score: f64) -> f64 {
        match self.direction {
            Direction::GreaterIsPositive => score,
            Direction::LessIsPositive => -score,
        }
    }
}

/// F1 as an exact fraction `2TP / (2TP + FP + FN)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct F1Fraction {
    num: u64,
    den: u64,
}

impl F1Fraction {
    pub(crate) fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        F1Fraction {
            num: 2 * tp,
            den: 2 * tp + fp + fn_,
        }
    }

    pub(crate) fn value(self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    fn gt(self, other: F1Fraction) -> bool {
        u128::from(self.num) * u128::from(other.den) > u128::from(other.num) * u128::from(self.den)
    }
}

/// Threshold maximizing training F1 over -inf, midpoints of consecutive
/// distinct scores, and +inf, in both orientations. Ties go to the smallest
/// threshold, then to greater-is-positive.
pub fn fit_threshold(feature_name: &str, scores: &[f64], labels: &[bool]) -> Result<ThresholdClassifier> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { row, column: 0 });
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut best = (
        F1Fraction::new(0, 0, 0),
        f64::NEG_INFINITY,
        Direction::GreaterIsPositive,
    );
    let mut first = true;
    let (mut pos_below, mut neg_below) = (0u64, 0u64);
    let mut k = 0;
    loop {
        // Everything in order[..k] lies below the current threshold.
        let threshold = if k == 0 {
            f64::NEG_INFINITY
        } else if k == order.len() {
            f64::INFINITY
        } else {
            let (a, b) = (scores[order[k - 1]], scores[order[k]]);
            let m = a + (b - a) / 2.0;
            if m >= b {
                a
            } else {
                m
            }
        };
        let greater = F1Fraction::new(pos - pos_below, neg - neg_below, pos_below);
        let less = F1Fraction::new(pos_below, neg_below, pos - pos_below);
        for (f1, dir) in [
            (greater, Direction::GreaterIsPositive),
            (less, Direction::LessIsPositive),
        ] {
            if first || f1.gt(best.0) {
                best = (f1, threshold, dir);
                first = false;
            }
        }
        if k == order.len() {
            break;
        }
        // Advance past one group of equal scores.
        let v = scores[order[k]];
        while k < order.len() && scores[order[k]] == v {
            if labels[order[k]] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            k += 1;
        }
    }
    Ok(ThresholdClassifier {
        feature_name: feature_name.to_string(),
        threshold: best.1,
        direction: best.2,
    })
}

/// Training F1 of a classifier, for callers that need the optimum value.
pub fn f1_score(classifier: &ThresholdClassifier, scores: &[f64], labels: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (classifier.predict(s), l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    F1Fraction::new(tp, fp, fn_).value()
}

/// JSON numbers cannot hold infinities; those are written as strings.
mod extended_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold `{t}`"))),
        }
    }
}
