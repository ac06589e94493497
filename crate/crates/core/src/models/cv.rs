use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ensemble::{fit, Hyperparameters, ModelKind};
use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::evaluation::auc_roc;
use crate::rng::{derive_seed, stream_rng};

pub const DEFAULT_FOLDS: usize = 5;

/// Fold id per sample. Each class is shuffled, then dealt round-robin, so
/// per-fold class counts differ by at most one.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }
    let mut fold = vec![0; y.len()];
    for (class, stream) in [(true, 1), (false, 0)] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < k {
            return Err(Error::FoldTooSmall {
                class_count: members.len(),
                folds: k,
            });
        }
        members.shuffle(&mut stream_rng(seed, stream));
        for (j, &i) in members.iter().enumerate() {
            fold[i] = j % k;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparameters: Hyperparameters,
    pub mean_auc: f64,
    pub fold_auc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub points: Vec<GridPoint>,
    pub best_index: usize,
}

impl CvResult {
    pub fn best(&self) -> Hyperparameters {
        self.points[self.best_index].hyperparameters
    }
}

fn same_except_trees(a: &Hyperparameters, b: &Hyperparameters) -> bool {
    Hyperparameters { n_trees: 0, ..*a } == Hyperparameters { n_trees: 0, ..*b }
}

/// Mean validation AUC per grid point over stratified folds; the first point
/// with the highest mean wins.
///
/// Grid points differing only in tree count share one fit per fold: the
/// largest ensemble is trained and scored at each prefix, which equals
/// training the smaller ones separately.
pub fn grid_search_cv(
    kind: ModelKind,
    x: &Matrix,
    y: &[bool],
    grid: &[Hyperparameters],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let fold_of = stratified_folds(y, folds, seed)?;

    // Groups of grid indices sharing everything but n_trees, ascending trees.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, hp) in grid.iter().enumerate() {
        match groups.iter_mut().find(|g| same_except_trees(&grid[g[0]], hp)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    for g in &mut groups {
        g.sort_by_key(|&i| (grid[i].n_trees, i));
    }

    let jobs: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..folds).map(move |f| (g, f)))
        .collect();
    let results = crate::par::map_slice(&jobs, |&(g, f)| -> Result<Vec<f64>> {
        let group = &groups[g];
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
        let val: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
        let (xt, xv) = (x.select_rows(&train), x.select_rows(&val));
        let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let yv: Vec<bool> = val.iter().map(|&i| y[i]).collect();
        let largest = grid[*group.last().expect("non-empty group")];
        let model = fit(kind, &xt, &yt, &largest, derive_seed(seed, f as u64))?;
        let stages: Vec<usize> = group.iter().map(|&i| grid[i].n_trees).collect();
        model
            .predict_staged(&xv, &stages)?
            .iter()
            .map(|scores| auc_roc(scores, &yv))
            .collect()
    });

    let mut fold_auc = vec![vec![0.0; folds]; grid.len()];
    for (&(g, f), res) in jobs.iter().zip(results) {
        for (&i, auc) in groups[g].iter().zip(res?) {
            fold_auc[i][f] = auc;
        }
    }
    let points: Vec<GridPoint> = grid
        .iter()
        .zip(fold_auc)
        .map(|(hp, aucs)| GridPoint {
            hyperparameters: *hp,
            mean_auc: aucs.iter().sum::<f64>() / folds as f64,
            fold_auc: aucs,
        })
        .collect();
    let mut best_index = 0;
    for (i, p) in points.iter().enumerate() {
        if p.mean_auc > points[best_index].mean_auc {
            best_index = i;
        }
    }
    Ok(CvResult { points, best_index })
}
