//! Ranking and fit metrics on the log-scale target.
//!
//! Spearman uses average ranks for ties and a two-sided Student-t
//! approximation for its p-value. MAPE is restricted to rows with a nonzero
//! target, since it is undefined elsewhere.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Reporting bar for Spearman p-values; runs above it are flagged.
pub const P_VALUE_BAR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("exact permutation p-value supports n <= 10, got {0}")]
    TooLargeForPermutation(usize),
}

fn check(pred: &[f64], truth: &[f64], min_len: usize) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.len() < min_len {
        return Err(MetricsError::TooShort {
            need: min_len,
            got: pred.len(),
        });
    }
    if let Some(i) = pred
        .iter()
        .zip(truth)
        .position(|(p, t)| !p.is_finite() || !t.is_finite())
    {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

pub fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation, or `None` when either input is constant.
/// Inputs must have equal length of at least 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    if x.len() < 2 || is_constant(x) || is_constant(y) {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of the positions
/// they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    /// `None` when either input is constant.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

fn t_test_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Tie-aware Spearman rank correlation with a two-sided t-approximation
/// p-value.
pub fn spearman(pred: &[f64], truth: &[f64]) -> Result<Spearman, MetricsError> {
    check(pred, truth, 3)?;
    let rho = pearson(&average_ranks(pred), &average_ranks(truth));
    Ok(Spearman {
        rho,
        p_value: rho.map(|r| t_test_p(r, pred.len())),
    })
}

/// Two-sided permutation p-value of Spearman's rho, enumerating every
/// permutation of `pred`. Intended for small samples.
pub fn spearman_exact_p(pred: &[f64], truth: &[f64]) -> Result<Option<f64>, MetricsError> {
    check(pred, truth, 3)?;
    let n = pred.len();
    if n > 10 {
        return Err(MetricsError::TooLargeForPermutation(n));
    }
    let rx = average_ranks(pred);
    let ry = average_ranks(truth);
    let Some(observed) = pearson(&rx, &ry) else {
        return Ok(None);
    };
    // Heap's algorithm over rank permutations.
    let mut perm = rx.clone();
    let mut c = vec![0usize; n];
    let mut total = 1u64;
    let mut extreme = u64::from(pearson(&perm, &ry).unwrap().abs() >= observed.abs() - 1e-12);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += 1;
            if pearson(&perm, &ry).unwrap().abs() >= observed.abs() - 1e-12 {
                extreme += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(Some(extreme as f64 / total as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// `None` when the truth is constant.
    pub r_squared: Option<f64>,
    pub rmse: f64,
}

/// Coefficient of determination and root mean squared error.
pub fn fit_metrics(pred: &[f64], truth: &[f64]) -> Result<FitMetrics, MetricsError> {
    check(pred, truth, 2)?;
    let m = mean(truth);
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    Ok(FitMetrics {
        r_squared: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        rmse: (ss_res / pred.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// `None` when no row has a nonzero target.
    pub value: Option<f64>,
    pub n_used: usize,
}

/// Mean absolute percentage error over rows whose target is positive.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<Mape, MetricsError> {
    check(pred, truth, 0)?;
    let (sum, n) = pred
        .iter()
        .zip(truth)
        .filter(|(_, t)| **t > 0.0)
        .fold((0.0, 0usize), |(s, n), (p, t)| (s + (p - t).abs() / t, n + 1));
    Ok(Mape {
        value: (n > 0).then(|| sum / n as f64),
        n_used: n,
    })
}

/// Metric bundle for one trained model on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub feature_subset: String,
    pub spearman_r: Option<f64>,
    pub spearman_p: Option<f64>,
    pub r_squared: Option<f64>,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub n_total: usize,
    pub n_mape: usize,
    /// Undefined metrics and reporting-bar violations, by name.
    pub flags: Vec<String>,
}

impl EvaluationReport {
    pub fn significant(&self) -> bool {
        self.spearman_p.is_some_and(|p| p < P_VALUE_BAR)
    }
}

/// Evaluates predicted rates against the log-scale truth.
pub fn evaluate(
    pred: &[f64],
    truth: &[f64],
    feature_subset: impl Into<String>,
) -> Result<EvaluationReport, MetricsError> {
    let s = spearman(pred, truth)?;
    let fit = fit_metrics(pred, truth)?;
    let m = mape(pred, truth)?;
    let mut flags = Vec::new();
    if s.rho.is_none() {
        flags.push("spearman_undefined".to_string());
    } else if s.p_value.is_none_or(|p| p >= P_VALUE_BAR) {
        flags.push("p_value_above_bar".to_string());
    }
    if fit.r_squared.is_none() {
        flags.push("r_squared_undefined".to_string());
    }
    if m.value.is_none() {
        flags.push("mape_undefined".to_string());
    }
    Ok(EvaluationReport {
        feature_subset: feature_subset.into(),
        spearman_r: s.rho,
        spearman_p: s.p_value,
        r_squared: fit.r_squared,
        rmse: fit.rmse,
        mape: m.value,
        n_total: pred.len(),
        n_mape: m.n_used,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n^2) rank oracle: rank = (# smaller) + (# equal + 1) / 2.
    fn brute_ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let less = x.iter().filter(|&&w| w < v).count() as f64;
                let eq = x.iter().filter(|&&w| w == v).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    }

    #[test]
    fn perfect_and_reversed() {
        let t = [1.0, 5.0, 2.0, 8.0, 3.0];
        let s = spearman(&t, &t).unwrap();
        assert!((s.rho.unwrap() - 1.0).abs() < 1e-15);
        assert!(s.p_value.unwrap() < 1e-6);
        let rev: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((spearman(&rev, &t).unwrap().rho.unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn worked_tie_example() {
        let pred = [1.0, 2.0, 2.0, 4.0];
        let truth = [1.0, 3.0, 2.0, 4.0];
        assert_eq!(average_ranks(&pred), vec![1.0, 2.5, 2.5, 4.0]);
        let rho = spearman(&pred, &truth).unwrap().rho.unwrap();
        // ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): sxy = 4.5, sxx = 4.5, syy = 5
        let expected = 4.5 / (4.5f64.sqrt() * 5f64.sqrt());
        assert!((rho - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_input_is_undefined() {
        let s = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, Spearman { rho: None, p_value: None });
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(MetricsError::TooShort { .. })));
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch(3, 2))));
        assert!(matches!(spearman(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]), Err(MetricsError::NonFinite(1))));
    }

    #[test]
    fn t_approximation_tracks_permutation_p() {
        let pred = [0.3, 1.2, 0.8, 2.5, 2.0, 3.1, 2.9, 4.0];
        let truth = [0.0, 0.5, 1.5, 1.0, 2.5, 2.0, 3.5, 3.0];
        let s = spearman(&pred, &truth).unwrap();
        let exact = spearman_exact_p(&pred, &truth).unwrap().unwrap();
        let approx = s.p_value.unwrap();
        assert!(approx < 0.05 && exact < 0.05, "{s:?} {exact}");
        assert!((approx - exact).abs() < 0.02, "{approx} vs {exact}");
        assert!(spearman_exact_p(&[0.0; 11], &[0.0; 11]).is_err());
    }

    #[test]
    fn fit_metric_cases() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(fit_metrics(&t, &t).unwrap(), FitMetrics { r_squared: Some(1.0), rmse: 0.0 });
        let m = fit_metrics(&[1.5; 4], &t).unwrap();
        assert_eq!(m.r_squared, Some(0.0));
        assert_eq!(fit_metrics(&t, &[2.0; 4]).unwrap().r_squared, None);
    }

    #[test]
    fn mape_cases() {
        assert_eq!(mape(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), Mape { value: None, n_used: 0 });
        assert_eq!(mape(&[9.0, 2.0], &[0.0, 2.0]).unwrap(), Mape { value: Some(0.0), n_used: 1 });
        assert_eq!(mape(&[2.0], &[4.0]).unwrap().value, Some(0.5));
    }

    #[test]
    fn evaluation_flags() {
        let r = evaluate(&[0.1, 0.2, 0.3], &[0.0, 0.0, 0.0], "T").unwrap();
        assert!(r.flags.contains(&"spearman_undefined".to_string()));
        assert!(r.flags.contains(&"r_squared_undefined".to_string()));
        assert!(r.flags.contains(&"mape_undefined".to_string()));
        assert!(!r.significant());
        let t: Vec<f64> = (0..100).map(f64::from).collect();
        let r = evaluate(&t, &t, "A").unwrap();
        assert!(r.flags.is_empty());
        assert!(r.significant());
    }

    proptest! {
        #[test]
        fn ranks_match_brute_force(x in prop::collection::vec(0u8..6, 1..60)) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            prop_assert_eq!(average_ranks(&x), brute_ranks(&x));
        }

        #[test]
        fn invariant_under_increasing_transforms(
            pairs in prop::collection::vec((-50i32..50, -50i32..50), 3..80)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            let base = spearman(&x, &y).unwrap().rho;
            let fx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() + 3.0 * v).collect();
            let fy: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            let moved = spearman(&fx, &fy).unwrap().rho;
            match (base, moved) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
            let sym = spearman(&y, &x).unwrap().rho;
            match (base, sym) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn rmse_symmetric_in_error_sign(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..50)
        ) {
            let truth: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let up: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let down: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
            let a = fit_metrics(&up, &truth).unwrap().rmse;
            let b = fit_metrics(&down, &truth).unwrap().rmse;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
