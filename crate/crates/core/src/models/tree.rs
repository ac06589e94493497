use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

const LEAF: i32 = -1;

/// Binary tree stored as parallel node arrays. Internal nodes send a row left
/// when `x[feature] <= threshold`; leaves have `feature == -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
    /// Training weight reaching the node.
    pub weight: Vec<f64>,
    pub impurity: Vec<f64>,
}

impl DecisionTree {
    fn empty() -> Self {
        DecisionTree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
            weight: Vec::new(),
            impurity: Vec::new(),
        }
    }

    fn push_leaf(&mut self, value: f64, weight: f64, impurity: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.weight.push(weight);
        self.impurity.push(impurity);
        self.feature.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node] == LEAF
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, n: usize) -> usize {
            if t.is_leaf(n) {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        go(self, 0)
    }

    pub fn predict_with(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut n = 0;
        while !self.is_leaf(n) {
            n = if value_of(self.feature[n] as usize) <= self.threshold[n] {
                self.left[n]
            } else {
                self.right[n]
            } as usize;
        }
        self.value[n]
    }

    pub fn predict_row(&self, x: &Matrix, row: usize) -> f64 {
        self.predict_with(|f| x.get(row, f))
    }

    /// Weighted impurity decrease per feature, relative to the root weight.
    pub fn impurity_decrease(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        let root = self.weight[0];
        for n in 0..self.n_nodes() {
            if self.is_leaf(n) {
                continue;
            }
            let (l, r) = (self.left[n] as usize, self.right[n] as usize);
            let dec = self.weight[n] * self.impurity[n]
                - self.weight[l] * self.impurity[l]
                - self.weight[r] * self.impurity[r];
            out[self.feature[n] as usize] += dec.max(0.0) / root;
        }
        out
    }

    /// Structural validity: child links in bounds and acyclic, features in range.
    pub fn check(&self, n_features: usize) -> bool {
        let n = self.n_nodes();
        let lens = [
            self.threshold.len(),
            self.left.len(),
            self.right.len(),
            self.value.len(),
            self.weight.len(),
            self.impurity.len(),
        ];
        if n == 0 || lens.iter().any(|&l| l != n) {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return false;
            }
            seen[i] = true;
            if !self.is_leaf(i) {
                let f = self.feature[i];
                let (l, r) = (self.left[i] as usize, self.right[i] as usize);
                if f < 0 || f as usize >= n_features || l >= n || r >= n {
                    return false;
                }
                stack.push(r);
                stack.push(l);
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Per-feature sample orderings, ascending by value with index tie-break.
pub(crate) fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|f| {
            let col = x.col(f);
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    /// Features drawn per split; `None` searches all of them.
    pub max_features: Option<usize>,
    /// Multiplier turning the target variance into the reported impurity
    /// (2 for Gini on 0/1 labels, 1 for squared error).
    pub impurity_scale: f64,
}

struct Split {
    score: f64,
    feature: usize,
    threshold: f64,
    n_left: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Adjacent floats: keep `b` on the right side.
    if m >= b {
        a
    } else {
        m
    }
}

/// Exact greedy regression tree on `y` with sample weights `w`, minimizing
/// weighted squared error. Samples with zero weight must already be absent
/// from `order`. Leaf values come from `leaf_value` over the node's samples.
pub(crate) fn grow(
    x: &Matrix,
    mut order: Vec<Vec<u32>>,
    y: &[f64],
    w: &[f64],
    params: GrowParams,
    mut rng: Option<&mut ChaCha8Rng>,
    leaf_value: impl Fn(&[u32]) -> f64,
) -> DecisionTree {
    let d = x.n_cols();
    let mut tree = DecisionTree::empty();
    let mut goes_left = vec![false; x.n_rows()];
    let mut scratch: Vec<u32> = Vec::new();
    let total = order.first().map_or(0, Vec::len);
    let mut stack = vec![(0usize, 0usize, total, 0usize)];

    let stats = |idx: &[u32]| {
        let (mut sw, mut sy, mut syy) = (0.0, 0.0, 0.0);
        for &i in idx {
            let (wi, yi) = (w[i as usize], y[i as usize]);
            sw += wi;
            sy += wi * yi;
            syy += wi * yi * yi;
        }
        (sw, sy, syy)
    };

    let (sw, sy, syy) = stats(&order[0]);
    let root_imp = if sw > 0.0 {
        (syy / sw - (sy / sw).powi(2)).max(0.0)
    } else {
        0.0
    };
    tree.push_leaf(leaf_value(&order[0]), sw, root_imp * params.impurity_scale);

    while let Some((node, lo, hi, depth)) = stack.pop() {
        let (sw, sy, syy) = stats(&order[0][lo..hi]);
        let variance = (syy / sw - (sy / sw).powi(2)).max(0.0);
        if hi - lo < 2 || variance <= 0.0 || params.max_depth.is_some_and(|m| depth >= m) {
            continue;
        }

        let feats: Vec<usize> = match (params.max_features, rng.as_deref_mut()) {
            (Some(k), Some(r)) if k < d => {
                let mut f = index::sample(r, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };

        let mut best: Option<Split> = None;
        for &f in &feats {
            let col = x.col(f);
            let ord = &order[f][lo..hi];
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..ord.len() - 1 {
                let i = ord[k] as usize;
                wl += w[i];
                sl += w[i] * y[i];
                let (v, vn) = (col[i], col[ord[k + 1] as usize]);
                if v == vn {
                    continue;
                }
                let (wr, sr) = (sw - wl, sy - sl);
                let score = sl * sl / wl + sr * sr / wr;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Split {
                        score,
                        feature: f,
                        threshold: midpoint(v, vn),
                        n_left: k + 1,
                    });
                }
            }
        }
        let Some(split) = best.filter(|s| s.score - sy * sy / sw > 0.0) else {
            continue;
        };

        let mid = lo + split.n_left;
        for (k, &i) in order[split.feature][lo..hi].iter().enumerate() {
            goes_left[i as usize] = k < split.n_left;
        }
        for (f, ord) in order.iter_mut().enumerate() {
            if f == split.feature {
                continue;
            }
            scratch.clear();
            let mut write = lo;
            for k in lo..hi {
                let i = ord[k];
                if goes_left[i as usize] {
                    ord[write] = i;
                    write += 1;
                } else {
                    scratch.push(i);
                }
            }
            ord[write..hi].copy_from_slice(&scratch);
        }

        let child = |tree: &mut DecisionTree, idx: &[u32]| {
            let (cw, cy, cyy) = stats(idx);
            let imp = (cyy / cw - (cy / cw).powi(2)).max(0.0);
            tree.push_leaf(leaf_value(idx), cw, imp * params.impurity_scale)
        };
        let l = child(&mut tree, &order[0][lo..mid]);
        let r = child(&mut tree, &order[0][mid..hi]);
        tree.feature[node] = split.feature as i32;
        tree.threshold[node] = split.threshold;
        tree.left[node] = l as u32;
        tree.right[node] = r as u32;
        stack.push((r, mid, hi, depth + 1));
        stack.push((l, lo, mid, depth + 1));
    }
    tree
}

/// Plain classification tree (Gini, all features, no sampling).
pub fn fit_decision_tree(x: &Matrix, y: &[bool], max_depth: Option<usize>) -> DecisionTree {
    let yf: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let w = vec![1.0; y.len()];
    let params = GrowParams {
        max_depth,
        max_features: None,
        impurity_scale: 2.0,
    };
    grow(x, presort(x), &yf, &w, params, None, |idx| {
        idx.iter().map(|&i| yf[i as usize]).sum::<f64>() / idx.len() as f64
    })
}
