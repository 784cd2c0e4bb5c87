//! Gradient/Hessian histograms over binned features.

use rayon::prelude::*;

use super::binning::BinnedMatrix;

/// Aggregates over a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

impl BinStats {
    #[inline]
    fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
        self.count += 1;
    }

    pub fn plus(self, o: BinStats) -> BinStats {
        BinStats {
            grad: self.grad + o.grad,
            hess: self.hess + o.hess,
            count: self.count + o.count,
        }
    }

    pub fn minus(self, o: BinStats) -> BinStats {
        BinStats {
            grad: self.grad - o.grad,
            hess: self.hess - o.hess,
            count: self.count - o.count,
        }
    }
}

/// One bin array per feature, plus the node totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub features: Vec<Vec<BinStats>>,
    pub total: BinStats,
}

impl Histogram {
    /// Direct construction over `rows`. Sums are accumulated in row order
    /// within each feature, so the result does not depend on thread count.
    pub fn build(binned: &BinnedMatrix, rows: &[u32], grad: &[f64], hess: &[f64]) -> Histogram {
        let ordered: Vec<(f64, f64)> = rows
            .iter()
            .map(|&r| (grad[r as usize], hess[r as usize]))
            .collect();
        let features = (0..binned.n_features())
            .into_par_iter()
            .map(|f| {
                let col = binned.column(f);
                let mut bins = vec![BinStats::default(); binned.mapper(f).n_bins()];
                for (&r, &(g, h)) in rows.iter().zip(&ordered) {
                    bins[col[r as usize] as usize].add(g, h);
                }
                bins
            })
            .collect();
        let mut total = BinStats::default();
        for &(g, h) in &ordered {
            total.add(g, h);
        }
        Histogram { features, total }
    }

    /// Sibling histogram: `self` (the parent) minus `child`.
    pub fn subtract(&self, child: &Histogram) -> Histogram {
        Histogram {
            features: self
                .features
                .iter()
                .zip(&child.features)
                .map(|(p, c)| p.iter().zip(c).map(|(a, b)| a.minus(*b)).collect())
                .collect(),
            total: self.total.minus(child.total),
        }
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_binned(rng: &mut ChaCha8Rng, n: usize, d: usize, bins: usize) -> BinnedMatrix {
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random_range(0..1000) as f64).collect())
            .collect();
        BinnedMatrix::from_columns(
            cols.iter().map(|c| ("x", FeatureKind::Continuous, c.as_slice())),
            bins,
        )
        .unwrap()
    }

    #[test]
    fn single_row_fills_one_bin_per_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_binned(&mut rng, 50, 3, 16);
        let g: Vec<f64> = (0..50).map(|i| i as f64 - 20.0).collect();
        let h = vec![0.5; 50];
        let hist = Histogram::build(&b, &[7], &g, &h);
        for f in 0..3 {
            let nonzero: Vec<_> = hist.features[f].iter().filter(|s| s.count > 0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(*nonzero[0], BinStats { grad: -13.0, hess: 0.5, count: 1 });
        }
    }

    #[test]
    fn matches_naive_accumulation_and_subtraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1000;
        let b = random_binned(&mut rng, n, 4, 16);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
        let all: Vec<u32> = (0..n as u32).collect();
        let parent = Histogram::build(&b, &all, &g, &h);

        // Naive oracle: scan every row for every (feature, bin).
        for f in 0..4 {
            for (bin, s) in parent.features[f].iter().enumerate() {
                let mut want = BinStats::default();
                for r in 0..n {
                    if b.column(f)[r] as usize == bin {
                        want.add(g[r], h[r]);
                    }
                }
                assert_eq!(*s, want);
            }
            let count: u32 = parent.features[f].iter().map(|s| s.count).sum();
            assert_eq!(count as usize, n);
        }

        let (left, right): (Vec<u32>, Vec<u32>) = all.iter().partition(|&&r| g[r as usize] < 0.0);
        let hl = Histogram::build(&b, &left, &g, &h);
        let hr = Histogram::build(&b, &right, &g, &h);
        let sub = parent.subtract(&hl);
        let scale: f64 = g.iter().map(|v| v.abs()).sum::<f64>() + h.iter().sum::<f64>();
        for f in 0..4 {
            for ((p, l), (r, s)) in parent.features[f]
                .iter()
                .zip(&hl.features[f])
                .zip(hr.features[f].iter().zip(&sub.features[f]))
            {
                assert_eq!(p.count, l.count + r.count);
                assert_eq!(s.count, r.count);
                assert!((p.grad - (l.grad + r.grad)).abs() <= 1e-9 * scale);
                assert!((s.grad - r.grad).abs() <= 1e-9 * scale);
                assert!((s.hess - r.hess).abs() <= 1e-9 * scale);
            }
        }
    }
}
