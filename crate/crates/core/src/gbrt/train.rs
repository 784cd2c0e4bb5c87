//! Stagewise boosting with leaf-wise tree growth.

use log::debug;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::goss::goss_sample;
use super::histogram::{BinStats, Histogram};
use super::model::{row_major, Ensemble, FeatureInfo};
use super::objective::{base_score, leaf_value, total_loss};
use super::split::{best_split, SplitCandidate, SplitParams, SplitRule};
use super::tree::{RegressionTree, TreeBuilder};
use super::{GbrtError, TrainConfig};
use crate::features::FeatureMatrix;

/// Per-round training diagnostics. Index `m` holds the value after `m` trees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_loss: Vec<f64>,
    /// RMSE of `λ` against the target; empty without a validation set.
    pub valid_rmse: Vec<f64>,
    pub trees_kept: usize,
    pub stopped_early: bool,
}

/// Fits an ensemble on `train`. With `valid` and a nonzero
/// `early_stopping_rounds`, training stops once validation RMSE has not
/// improved for that many rounds and the ensemble is cut back to its best
/// round.
pub fn fit(
    train: &FeatureMatrix,
    valid: Option<&FeatureMatrix>,
    config: &TrainConfig,
) -> Result<(Ensemble, TrainingLog), GbrtError> {
    config.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(GbrtError::EmptyMatrix);
    }
    let target = train.target();
    if let Some(row) = target.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(GbrtError::InvalidTarget { row });
    }
    let binned = BinnedMatrix::from_columns(
        train
            .columns()
            .iter()
            .map(|c| (c.name.as_str(), c.kind, c.values.as_slice())),
        config.max_bins,
    )?;
    let features: Vec<FeatureInfo> = train
        .columns()
        .iter()
        .map(|c| FeatureInfo {
            name: c.name.clone(),
            kind: c.kind,
        })
        .collect();
    let d = features.len();
    let f0 = base_score(target);
    let lr = config.learning_rate;
    let params = SplitParams {
        min_samples_leaf: config.min_samples_leaf,
        min_sum_hessian_leaf: config.min_sum_hessian_leaf,
    };

    let train_rows = if config.goss_enabled {
        Some(row_major(train, &features)?)
    } else {
        None
    };
    let valid = match valid {
        Some(v) => {
            if let Some(row) = v.target().iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(GbrtError::InvalidTarget { row });
            }
            Some((row_major(v, &features)?, v.target()))
        }
        None => None,
    };

    let mut scores = vec![f0; n];
    let mut valid_scores = valid.as_ref().map(|(_, t)| vec![f0; t.len()]);
    let mut log = TrainingLog::default();
    log.train_loss.push(total_loss(target, &scores));
    let mut best = (f64::INFINITY, 0usize);
    if let (Some((_, vt)), Some(vs)) = (&valid, &valid_scores) {
        let r = rmse_lambda(vt, vs);
        log.valid_rmse.push(r);
        best = (r, 0);
    }

    let all_rows: Vec<u32> = (0..n as u32).collect();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees: Vec<RegressionTree> = Vec::with_capacity(config.num_trees);
    for m in 0..config.num_trees {
        for i in 0..n {
            let l = scores[i].exp();
            grad[i] = l - target[i];
            hess[i] = l;
        }
        let rows = if config.goss_enabled {
            let s = goss_sample(&grad, config.goss_top_rate, config.goss_other_rate, config.seed, m as u64);
            for (&r, &w) in s.rows.iter().zip(&s.weights) {
                grad[r as usize] *= w;
                hess[r as usize] *= w;
            }
            s.rows
        } else {
            all_rows.clone()
        };

        let (tree, leaf_rows) = grow_tree(&binned, rows, &grad, &hess, &params, config);
        match &train_rows {
            Some(rm) => {
                for (i, s) in scores.iter_mut().enumerate() {
                    *s += lr * tree.predict_row(&rm[i * d..(i + 1) * d]);
                }
            }
            None => {
                for (leaf, rows) in leaf_rows.iter().enumerate() {
                    let v = tree.leaf_values()[leaf];
                    for &r in rows {
                        scores[r as usize] += lr * v;
                    }
                }
            }
        }
        log.train_loss.push(total_loss(target, &scores));

        let mut stop = false;
        if let (Some((vrows, vt)), Some(vs)) = (&valid, valid_scores.as_mut()) {
            for (i, s) in vs.iter_mut().enumerate() {
                *s += lr * tree.predict_row(&vrows[i * d..(i + 1) * d]);
            }
            let r = rmse_lambda(vt, vs);
            log.valid_rmse.push(r);
            if r < best.0 {
                best = (r, m + 1);
            } else if config.early_stopping_rounds > 0 && m + 1 - best.1 >= config.early_stopping_rounds {
                stop = true;
            }
        }
        trees.push(tree);
        if m % 50 == 0 {
            debug!("round {m}: train loss {}", log.train_loss[m + 1]);
        }
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    if valid.is_some() && config.early_stopping_rounds > 0 {
        trees.truncate(best.1);
    }
    log.trees_kept = trees.len();
    Ok((Ensemble::new(features, f0, config.clone(), trees), log))
}

fn rmse_lambda(target: &[f64], raw: &[f64]) -> f64 {
    let sse: f64 = target
        .iter()
        .zip(raw)
        .map(|(t, f)| (f.exp() - t) * (f.exp() - t))
        .sum();
    (sse / target.len() as f64).sqrt()
}

struct OpenLeaf {
    rows: Vec<u32>,
    total: BinStats,
    hist: Option<Histogram>,
    split: Option<SplitCandidate>,
}

fn direct_total(rows: &[u32], grad: &[f64], hess: &[f64]) -> BinStats {
    let mut s = BinStats::default();
    for &r in rows {
        s.grad += grad[r as usize];
        s.hess += hess[r as usize];
        s.count += 1;
    }
    s
}

/// Best-first growth: repeatedly splits the open leaf with the largest gain
/// (lowest slot on ties) until `max_leaves` or no positive gain remains.
/// Returns the tree and, per leaf, the rows of `rows` that reached it.
pub(crate) fn grow_tree(
    binned: &BinnedMatrix,
    rows: Vec<u32>,
    grad: &[f64],
    hess: &[f64],
    params: &SplitParams,
    config: &TrainConfig,
) -> (RegressionTree, Vec<Vec<u32>>) {
    let max_leaves = config.max_leaves;
    let hist = Histogram::build(binned, &rows, grad, hess);
    let split = (max_leaves > 1)
        .then(|| best_split(&hist, binned, params))
        .flatten();
    let mut builder = TreeBuilder::new();
    let mut open = vec![OpenLeaf {
        rows,
        total: hist.total,
        hist: Some(hist),
        split,
    }];

    while open.len() < max_leaves {
        let mut pick: Option<(usize, f64)> = None;
        for (i, o) in open.iter().enumerate() {
            if let Some(s) = &o.split {
                if pick.is_none_or(|(_, g)| s.gain > g) {
                    pick = Some((i, s.gain));
                }
            }
        }
        let Some((slot, _)) = pick else { break };
        let leaf = &mut open[slot];
        let split = leaf.split.take().expect("picked leaf has a split");
        let parent_hist = leaf.hist.take().expect("splittable leaf keeps its histogram");
        let rows = std::mem::take(&mut leaf.rows);

        let table = split.left_bins();
        let col = binned.column(split.feature);
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| table[col[r as usize] as usize]);
        let (hl, hr) = if left.len() <= right.len() {
            let hl = Histogram::build(binned, &left, grad, hess);
            let mut hr = parent_hist.subtract(&hl);
            hr.total = direct_total(&right, grad, hess);
            (hl, hr)
        } else {
            let hr = Histogram::build(binned, &right, grad, hess);
            let mut hl = parent_hist.subtract(&hr);
            hl.total = direct_total(&left, grad, hess);
            (hl, hr)
        };

        let (threshold, cats) = match &split.rule {
            SplitRule::Numeric { threshold, .. } => (*threshold, None),
            SplitRule::Categorical { categories, .. } => (0.0, Some(categories.as_slice())),
        };
        let (ls, rs) = builder.split(slot, split.feature, threshold, cats, split.gain);
        debug_assert_eq!((ls, rs), (slot, open.len()));

        // Children of the final split can never be split themselves.
        let more = open.len() + 1 < max_leaves;
        let child = |rows: Vec<u32>, h: Histogram| {
            let split = if more { best_split(&h, binned, params) } else { None };
            OpenLeaf {
                rows,
                total: h.total,
                hist: split.is_some().then_some(h),
                split,
            }
        };
        open[slot] = child(left, hl);
        open.push(child(right, hr));
    }

    let values: Vec<f64> = open
        .iter()
        .map(|o| leaf_value(o.total.grad, o.total.hess, config.leaf_cap))
        .collect();
    let tree = builder.finish(&values);
    (tree, open.into_iter().map(|o| o.rows).collect())
}
