//! Per-column discretization into at most 256 bins.
//!
//! A numeric value falls into the first bin whose upper edge is `>= x`.
//! When a column has no more distinct values than `max_bins`, each distinct
//! value gets its own bin and binning is lossless; otherwise edges are
//! equal-frequency quantiles. Categorical columns map each code to a bin.

use crate::features::FeatureKind;

use super::GbrtError;

/// Largest accepted categorical code; keeps category bitsets small.
pub const MAX_CATEGORY_CODE: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    /// Sorted ascending. For categorical columns, the codes themselves.
    pub upper_edges: Vec<f64>,
    pub categorical: bool,
}

impl BinMapper {
    pub fn fit(
        name: &str,
        values: &[f64],
        kind: FeatureKind,
        max_bins: usize,
    ) -> Result<BinMapper, GbrtError> {
        let mut sorted = values.to_vec();
        if let Some(row) = sorted.iter().position(|v| !v.is_finite()) {
            return Err(GbrtError::NonFiniteFeature {
                column: name.to_string(),
                row,
            });
        }
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();

        if kind == FeatureKind::Categorical {
            if let Some(&v) = distinct
                .iter()
                .find(|v| **v < 0.0 || v.fract() != 0.0 || **v >= MAX_CATEGORY_CODE as f64)
            {
                return Err(GbrtError::InvalidCategory {
                    column: name.to_string(),
                    value: v,
                });
            }
            if distinct.len() > max_bins {
                return Err(GbrtError::TooManyCategories {
                    column: name.to_string(),
                    count: distinct.len(),
                    max: max_bins,
                });
            }
            return Ok(BinMapper {
                upper_edges: distinct,
                categorical: true,
            });
        }

        if distinct.len() <= max_bins {
            return Ok(BinMapper {
                upper_edges: distinct,
                categorical: false,
            });
        }
        let n = sorted.len();
        let mut edges: Vec<f64> = (1..=max_bins)
            .map(|b| sorted[(b * n).div_ceil(max_bins) - 1])
            .collect();
        edges.dedup();
        Ok(BinMapper {
            upper_edges: edges,
            categorical: false,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.upper_edges.len()
    }

    /// Bin of a training value. Values above the last edge land in the last
    /// bin; unknown categories are not expected here.
    pub fn bin(&self, x: f64) -> u8 {
        let i = self.upper_edges.partition_point(|e| *e < x);
        i.min(self.upper_edges.len() - 1) as u8
    }
}

/// Column-major bin codes for a training set.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    bins: Vec<Vec<u8>>,
    mappers: Vec<BinMapper>,
}

impl BinnedMatrix {
    /// Bins each `(name, kind, values)` column. All columns must have the
    /// same length.
    pub fn from_columns<'a>(
        columns: impl IntoIterator<Item = (&'a str, FeatureKind, &'a [f64])>,
        max_bins: usize,
    ) -> Result<BinnedMatrix, GbrtError> {
        let mut bins = Vec::new();
        let mut mappers = Vec::new();
        let mut n_rows = None;
        for (name, kind, values) in columns {
            if *n_rows.get_or_insert(values.len()) != values.len() {
                return Err(GbrtError::InvalidConfig(format!(
                    "column {name} has a different length"
                )));
            }
            let mapper = BinMapper::fit(name, values, kind, max_bins)?;
            bins.push(values.iter().map(|&v| mapper.bin(v)).collect());
            mappers.push(mapper);
        }
        Ok(BinnedMatrix {
            n_rows: n_rows.unwrap_or(0),
            bins,
            mappers,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.bins.len()
    }

    pub fn column(&self, feature: usize) -> &[u8] {
        &self.bins[feature]
    }

    pub fn mapper(&self, feature: usize) -> &BinMapper {
        &self.mappers[feature]
    }

    pub fn mappers(&self) -> &[BinMapper] {
        &self.mappers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lossless_when_few_distinct() {
        let m = BinMapper::fit("x", &[3.0, 1.0, 2.0, 3.0], FeatureKind::Ordinal, 4).unwrap();
        assert_eq!(m.upper_edges, vec![1.0, 2.0, 3.0]);
        assert_eq!([m.bin(1.0), m.bin(2.0), m.bin(3.0)], [0, 1, 2]);
    }

    #[test]
    fn quantile_edges() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let m = BinMapper::fit("x", &v, FeatureKind::Continuous, 4).unwrap();
        assert_eq!(m.upper_edges, vec![24.0, 49.0, 74.0, 99.0]);
        let counts = v.iter().fold([0; 4], |mut c, &x| {
            c[m.bin(x) as usize] += 1;
            c
        });
        assert_eq!(counts, [25; 4]);
    }

    #[test]
    fn heavy_ties_collapse_edges() {
        let mut v = vec![0.0; 90];
        v.extend((1..=10).map(f64::from));
        let m = BinMapper::fit("x", &v, FeatureKind::Ordinal, 4).unwrap();
        assert_eq!(m.upper_edges, vec![0.0, 10.0]);
    }

    #[test]
    fn categorical_validation() {
        let m = BinMapper::fit("c", &[4.0, 0.0, 4.0], FeatureKind::Categorical, 8).unwrap();
        assert_eq!(m.upper_edges, vec![0.0, 4.0]);
        assert!(m.categorical);
        assert!(matches!(
            BinMapper::fit("c", &[0.5], FeatureKind::Categorical, 8),
            Err(GbrtError::InvalidCategory { .. })
        ));
        assert!(matches!(
            BinMapper::fit("c", &[0.0, 1.0, 2.0], FeatureKind::Categorical, 2),
            Err(GbrtError::TooManyCategories { .. })
        ));
        assert!(matches!(
            BinMapper::fit("x", &[f64::NAN], FeatureKind::Ordinal, 2),
            Err(GbrtError::NonFiniteFeature { row: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn bins_are_monotone_and_threshold_consistent(
            v in prop::collection::vec(-1e3f64..1e3, 1..300),
            max_bins in 1usize..40,
        ) {
            let m = BinMapper::fit("x", &v, FeatureKind::Continuous, max_bins).unwrap();
            prop_assert!(m.n_bins() <= max_bins);
            prop_assert!(m.upper_edges.windows(2).all(|w| w[0] < w[1]));
            for &x in &v {
                for &y in &v {
                    if x <= y {
                        prop_assert!(m.bin(x) <= m.bin(y));
                    }
                }
                // routing by bin index agrees with routing by edge value
                for (b, &edge) in m.upper_edges.iter().enumerate() {
                    prop_assert_eq!(m.bin(x) as usize <= b, x <= edge);
                }
            }
        }
    }
}
