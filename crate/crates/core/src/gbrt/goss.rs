//! Gradient-based one-side sampling.
//!
//! Keeps the `floor(a·n)` rows with the largest `|g|`, draws `floor(b·n)`
//! of the remaining rows uniformly without replacement, and up-weights the
//! drawn rows by `(1 - a) / b` so that gradient sums stay unbiased.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    /// Selected rows, ascending.
    pub rows: Vec<u32>,
    /// Multiplier for each entry of `rows`.
    pub weights: Vec<f64>,
    /// True when the fractions were too small for `n` and all rows were kept.
    pub full: bool,
}

/// Deterministic for a given `(grad, a, b, seed, stream)`; `stream` lets
/// each boosting round draw independently from one seed.
pub fn goss_sample(grad: &[f64], a: f64, b: f64, seed: u64, stream: u64) -> GossSample {
    let n = grad.len();
    let top_k = (a * n as f64).floor() as usize;
    let other_k = (b * n as f64).floor() as usize;
    if top_k == 0 || other_k == 0 || top_k + other_k > n {
        return GossSample {
            rows: (0..n as u32).collect(),
            weights: vec![1.0; n],
            full: true,
        };
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    let by_magnitude = |x: &u32, y: &u32| {
        grad[*y as usize]
            .abs()
            .total_cmp(&grad[*x as usize].abs())
            .then(x.cmp(y))
    };
    order.select_nth_unstable_by(top_k - 1, by_magnitude);
    let (top, rest) = order.split_at_mut(top_k);
    // `rest` order after selection is unspecified; sort so the draw is
    // reproducible.
    rest.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let drawn = rand::seq::index::sample(&mut rng, rest.len(), other_k);

    let w = (1.0 - a) / b;
    let mut picked: Vec<(u32, f64)> = top.iter().map(|&r| (r, 1.0)).collect();
    picked.extend(drawn.iter().map(|i| (rest[i], w)));
    picked.sort_unstable_by_key(|p| p.0);
    GossSample {
        rows: picked.iter().map(|p| p.0).collect(),
        weights: picked.iter().map(|p| p.1).collect(),
        full: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn keeps_largest_gradients() {
        let g = [0.1, -5.0, 0.2, 0.3, 4.0, -0.1, 0.0, 0.05, 0.4, -0.2];
        for seed in 0..20 {
            let s = goss_sample(&g, 0.2, 0.3, seed, 0);
            assert!(!s.full);
            assert_eq!(s.rows.len(), 5);
            for r in [1u32, 4] {
                let i = s.rows.iter().position(|&x| x == r).unwrap();
                assert_eq!(s.weights[i], 1.0);
            }
            let w = (1.0 - 0.2) / 0.3;
            assert_eq!(s.weights.iter().filter(|&&x| x == w).count(), 3);
        }
    }

    #[test]
    fn ties_break_by_row_index() {
        let g = [1.0; 10];
        let s = goss_sample(&g, 0.2, 0.1, 3, 0);
        assert_eq!(&s.weights[..2], &[1.0, 1.0]);
        assert_eq!(&s.rows[..2], &[0, 1]);
    }

    #[test]
    fn complementary_rates_cover_everything() {
        let g: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = goss_sample(&g, 0.3, 0.7, 1, 0);
        assert_eq!(s.rows, (0..10).collect::<Vec<u32>>());
        let w = 0.7 / 0.7;
        assert!(s.weights[..7].iter().all(|&x| x == w));
    }

    #[test]
    fn falls_back_when_fractions_vanish() {
        let s = goss_sample(&[1.0, 2.0, 3.0], 0.2, 0.1, 0, 0);
        assert!(s.full);
        assert_eq!(s.weights, vec![1.0; 3]);
    }

    #[test]
    fn deterministic_per_seed_and_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(goss_sample(&g, 0.2, 0.1, 5, 2), goss_sample(&g, 0.2, 0.1, 5, 2));
        assert_ne!(goss_sample(&g, 0.2, 0.1, 5, 2), goss_sample(&g, 0.2, 0.1, 5, 3));
    }

    #[test]
    fn weighted_sum_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 10_000;
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..1.0)).collect();
        let full: f64 = g.iter().sum();
        let trials = 200;
        let mean: f64 = (0..trials)
            .map(|t| {
                let s = goss_sample(&g, 0.2, 0.1, 77, t);
                s.rows.iter().zip(&s.weights).map(|(&r, w)| g[r as usize] * w).sum::<f64>()
            })
            .sum::<f64>()
            / trials as f64;
        assert!((mean - full).abs() <= 0.02 * full.abs(), "{mean} vs {full}");
    }
}
