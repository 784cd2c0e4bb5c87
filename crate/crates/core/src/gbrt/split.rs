//! Best-split search over a node histogram.
//!
//! Gain is the second-order objective improvement
//! `G_L²/(H_L+ε) + G_R²/(H_R+ε) - G_P²/(H_P+ε)`. Numeric features scan bin
//! boundaries left to right. Categorical features sort the categories present
//! in the node by `G/(H+ε)` and scan prefixes of that order, which reaches the
//! optimal binary partition without enumerating subsets.

use super::binning::BinnedMatrix;
use super::histogram::{BinStats, Histogram};
use super::objective::EPS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub min_samples_leaf: usize,
    pub min_sum_hessian_leaf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Rows with `x <= threshold` (equivalently `bin <= bin`) go left.
    Numeric { threshold: f64, bin: u8 },
    /// Rows whose category is listed go left; everything else goes right.
    /// `categories` is sorted ascending and `bins` is aligned with it.
    Categorical { categories: Vec<u32>, bins: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub rule: SplitRule,
    pub gain: f64,
    pub left: BinStats,
    pub right: BinStats,
}

impl SplitCandidate {
    /// Lookup table from bin code to side, for partitioning training rows.
    pub fn left_bins(&self) -> [bool; 256] {
        let mut table = [false; 256];
        match &self.rule {
            SplitRule::Numeric { bin, .. } => table[..=*bin as usize].fill(true),
            SplitRule::Categorical { bins, .. } => {
                for &b in bins {
                    table[b as usize] = true;
                }
            }
        }
        table
    }
}

#[inline]
fn score(s: BinStats) -> f64 {
    s.grad * s.grad / (s.hess + EPS)
}

pub fn split_gain(left: BinStats, right: BinStats, parent: BinStats) -> f64 {
    score(left) + score(right) - score(parent)
}

impl SplitParams {
    #[inline]
    pub fn admissible(&self, left: BinStats, right: BinStats) -> bool {
        left.count as usize >= self.min_samples_leaf
            && right.count as usize >= self.min_samples_leaf
            && left.hess >= self.min_sum_hessian_leaf
            && right.hess >= self.min_sum_hessian_leaf
    }
}

struct Best {
    gain: f64,
    cand: Option<SplitCandidate>,
}

impl Best {
    /// Strict improvement only, so earlier candidates win ties.
    fn beats(&self, gain: f64) -> bool {
        gain > self.gain
    }
}

/// Maximal-gain admissible split, or `None` if no split has positive gain.
/// Ties go to the lowest feature index, then the lowest bin (numeric) or the
/// shortest prefix (categorical).
pub fn best_split(hist: &Histogram, binned: &BinnedMatrix, params: &SplitParams) -> Option<SplitCandidate> {
    let parent = hist.total;
    if (parent.count as usize) < 2 * params.min_samples_leaf {
        return None;
    }
    let mut best = Best {
        gain: 0.0,
        cand: None,
    };
    for (feature, bins) in hist.features.iter().enumerate() {
        let mapper = binned.mapper(feature);
        if mapper.categorical {
            categorical(feature, bins, parent, params, &mapper.upper_edges, &mut best);
        } else {
            numeric(feature, bins, parent, params, &mapper.upper_edges, &mut best);
        }
    }
    best.cand
}

fn numeric(
    feature: usize,
    bins: &[BinStats],
    parent: BinStats,
    params: &SplitParams,
    edges: &[f64],
    best: &mut Best,
) {
    let nb = bins.len();
    if nb < 2 {
        return;
    }
    let mut suffix = vec![BinStats::default(); nb + 1];
    for b in (0..nb).rev() {
        suffix[b] = suffix[b + 1].plus(bins[b]);
    }
    let mut left = BinStats::default();
    for b in 0..nb - 1 {
        left = left.plus(bins[b]);
        let right = suffix[b + 1];
        if !params.admissible(left, right) {
            continue;
        }
        let gain = split_gain(left, right, parent);
        if best.beats(gain) {
            best.gain = gain;
            best.cand = Some(SplitCandidate {
                feature,
                rule: SplitRule::Numeric {
                    threshold: edges[b],
                    bin: b as u8,
                },
                gain,
                left,
                right,
            });
        }
    }
}

fn categorical(
    feature: usize,
    bins: &[BinStats],
    parent: BinStats,
    params: &SplitParams,
    codes: &[f64],
    best: &mut Best,
) {
    let mut present: Vec<(u8, BinStats)> = bins
        .iter()
        .enumerate()
        .filter(|(_, s)| s.count > 0)
        .map(|(b, s)| (b as u8, *s))
        .collect();
    if present.len() < 2 {
        return;
    }
    present.sort_by(|a, b| {
        let ra = a.1.grad / (a.1.hess + EPS);
        let rb = b.1.grad / (b.1.hess + EPS);
        ra.total_cmp(&rb).then(a.0.cmp(&b.0))
    });
    let m = present.len();
    let mut suffix = vec![BinStats::default(); m + 1];
    for i in (0..m).rev() {
        suffix[i] = suffix[i + 1].plus(present[i].1);
    }
    let mut left = BinStats::default();
    for k in 0..m - 1 {
        left = left.plus(present[k].1);
        let right = suffix[k + 1];
        if !params.admissible(left, right) {
            continue;
        }
        let gain = split_gain(left, right, parent);
        if best.beats(gain) {
            let mut chosen: Vec<(u32, u8)> = present[..=k]
                .iter()
                .map(|&(b, _)| (codes[b as usize] as u32, b))
                .collect();
            chosen.sort_unstable();
            best.gain = gain;
            best.cand = Some(SplitCandidate {
                feature,
                rule: SplitRule::Categorical {
                    categories: chosen.iter().map(|c| c.0).collect(),
                    bins: chosen.iter().map(|c| c.1).collect(),
                },
                gain,
                left,
                right,
            });
        }
    }
}
