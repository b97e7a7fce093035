//! Labelled tabular data with per-feature bounds, median imputation and
//! standard scaling.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or transforming a [`LabeledDataset`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label at row {row} is {value}, expected 0 or 1")]
    InvalidLabel { row: usize, value: f64 },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` has no non-missing training value")]
    AllMissing(String),
    #[error("index set is empty")]
    EmptyIndexSet,
    #[error("row index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
}

/// Ordered feature names plus optional short aliases (e.g. `G120` for `Glucose`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    #[serde(default)]
    aliases: Vec<(String, usize)>,
}

impl FeatureSchema {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, DataError> {
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            if out.iter().any(|o| o == n) {
                return Err(DataError::DuplicateFeature(n.to_string()));
            }
            out.push(n.to_string());
        }
        Ok(Self {
            names: out,
            aliases: Vec::new(),
        })
    }

    /// Registers `alias` as an alternative name for the feature `target`.
    pub fn with_alias(mut self, alias: &str, target: &str) -> Result<Self, DataError> {
        let idx = self
            .position(target)
            .ok_or_else(|| DataError::UnknownFeature(target.to_string()))?;
        if self.index_of(alias).is_some() {
            return Err(DataError::DuplicateFeature(alias.to_string()));
        }
        self.aliases.push((alias.to_string(), idx));
        Ok(self)
    }

    /// The eight Pima Indians Diabetes features with their clinical codes as aliases.
    pub fn pima() -> Self {
        Self::new(&PIMA_FEATURES)
            .and_then(|s| s.with_alias("G120", "Glucose"))
            .and_then(|s| s.with_alias("BP", "BloodPressure"))
            .and_then(|s| s.with_alias("ST", "SkinThickness"))
            .and_then(|s| s.with_alias("I120", "Insulin"))
            .and_then(|s| s.with_alias("DPF", "DiabetesPedigreeFunction"))
            .expect("static schema is valid")
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Resolves a feature name or alias to its column index.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.position(name).or_else(|| {
            self.aliases
                .iter()
                .find(|(a, _)| a == name)
                .map(|&(_, i)| i)
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Column names of the Pima Indians Diabetes CSV, in file order, without the label.
pub const PIMA_FEATURES: [&str; 8] = [
    "Pregnancies",
    "Glucose",
    "BloodPressure",
    "SkinThickness",
    "Insulin",
    "BMI",
    "DiabetesPedigreeFunction",
    "Age",
];

/// Pima features where a zero encodes a missing measurement.
pub const PIMA_MISSING: [&str; 5] = ["I120", "ST", "BP", "BMI", "G120"];

/// Name of the Pima label column.
pub const PIMA_LABEL: &str = "Outcome";

/// An `n × m` matrix of raw feature values with binary labels.
///
/// Values are stored row-major. `bounds` always holds the observed per-feature
/// minimum and maximum over every stored row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    schema: FeatureSchema,
    n_rows: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
    bounds: Vec<(f64, f64)>,
}

impl LabeledDataset {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<f64>>,
        labels: Vec<f64>,
    ) -> Result<Self, DataError> {
        let m = schema.len();
        if rows.is_empty() {
            return Err(DataError::EmptyFile);
        }
        if rows.len() != labels.len() {
            return Err(DataError::RaggedRow {
                row: rows.len().min(labels.len()),
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(DataError::RaggedRow {
                    row: i,
                    expected: m,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row: i, column: j });
                }
            }
            values.extend_from_slice(row);
        }
        let labels = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if l == 0.0 {
                    Ok(0u8)
                } else if l == 1.0 {
                    Ok(1u8)
                } else {
                    Err(DataError::InvalidLabel { row: i, value: l })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_parts(schema, values, labels))
    }

    fn from_parts(schema: FeatureSchema, values: Vec<f64>, labels: Vec<u8>) -> Self {
        let n_rows = labels.len();
        let mut ds = Self {
            schema,
            n_rows,
            values,
            labels,
            bounds: Vec::new(),
        };
        ds.bounds = (0..ds.n_features()).map(|j| ds.column_bounds(j)).collect();
        ds
    }

    fn column_bounds(&self, j: usize) -> (f64, f64) {
        self.column(j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn feature_names(&self) -> &[String] {
        self.schema.names()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features().max(1))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let m = self.n_features();
        (0..self.n_rows).map(move |i| self.values[i * m + j])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Observed `(min, max)` of each feature.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn feature_bounds(&self, name: &str) -> Option<(f64, f64)> {
        self.schema.index_of(name).map(|j| self.bounds[j])
    }

    /// Fraction of rows whose value for `feature` is exactly zero.
    pub fn zero_fraction(&self, feature: &str) -> Result<f64, DataError> {
        let j = self.resolve(feature)?;
        let zeros = self.column(j).filter(|&v| v == 0.0).count();
        Ok(zeros as f64 / self.n_rows as f64)
    }

    fn resolve(&self, feature: &str) -> Result<usize, DataError> {
        self.schema
            .index_of(feature)
            .ok_or_else(|| DataError::UnknownFeature(feature.to_string()))
    }

    fn check_indices(&self, indices: &[usize]) -> Result<(), DataError> {
        if indices.is_empty() {
            return Err(DataError::EmptyIndexSet);
        }
        match indices.iter().find(|&&i| i >= self.n_rows) {
            Some(&i) => Err(DataError::IndexOutOfRange(i)),
            None => Ok(()),
        }
    }

    /// Returns a dataset with only the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        self.check_indices(indices)?;
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Self::from_parts(self.schema.clone(), values, labels))
    }

    /// Replaces zeros in each listed feature by the median of that feature's
    /// nonzero values over `train_indices`. Every row is imputed, train or not.
    pub fn impute_median(
        &self,
        missing_features: &[&str],
        train_indices: &[usize],
    ) -> Result<Self, DataError> {
        self.check_indices(train_indices)?;
        let m = self.n_features();
        let mut values = self.values.clone();
        for &name in missing_features {
            let j = self.resolve(name)?;
            let mut present: Vec<f64> = train_indices
                .iter()
                .map(|&i| self.values[i * m + j])
                .filter(|&v| v != 0.0)
                .collect();
            let med = median(&mut present).ok_or_else(|| DataError::AllMissing(name.to_string()))?;
            for i in 0..self.n_rows {
                let v = &mut values[i * m + j];
                if *v == 0.0 {
                    *v = med;
                }
            }
        }
        Ok(Self::from_parts(
            self.schema.clone(),
            values,
            self.labels.clone(),
        ))
    }

    /// Fits a [`ScalerParams`] on `train_indices` and returns the scaled copy.
    pub fn standardize(&self, train_indices: &[usize]) -> Result<(Self, ScalerParams), DataError> {
        let scaler = ScalerParams::fit(self, train_indices)?;
        let mut values = self.values.clone();
        for row in values.chunks_exact_mut(self.n_features().max(1)) {
            scaler.transform_in_place(row);
        }
        Ok((
            Self::from_parts(self.schema.clone(), values, self.labels.clone()),
            scaler,
        ))
    }
}

/// Median of a slice (mean of the middle pair for even lengths). Reorders `xs`.
pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(data: &LabeledDataset, train_indices: &[usize]) -> Result<Self, DataError> {
        data.check_indices(train_indices)?;
        let m = data.n_features();
        let n = train_indices.len() as f64;
        let mut mean = alloc::vec![0.0; m];
        for &i in train_indices {
            for (acc, &v) in mean.iter_mut().zip(data.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = alloc::vec![0.0; m];
        for &i in train_indices {
            for ((acc, &v), &mu) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var.into_iter().map(|s| libm::sqrt(s / n)).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; m],
            std: alloc::vec![1.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn transform_in_place(&self, row: &mut [f64]) {
        for ((v, &mu), &sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if sd > 0.0 { (*v - mu) / sd } else { 0.0 };
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        self.transform_in_place(&mut out);
        out
    }

    /// Maps scaled values back to raw units. Constant features map back to their mean.
    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &mu), &sd)| if sd > 0.0 { v * sd + mu } else { mu })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_col(values: &[f64]) -> LabeledDataset {
        let schema = FeatureSchema::new(&["x"]).unwrap();
        let rows = values.iter().map(|&v| vec![v]).collect();
        let labels = (0..values.len()).map(|i| (i % 2) as f64).collect();
        LabeledDataset::new(schema, rows, labels).unwrap()
    }

    #[test]
    fn median_imputation_uses_nonzero_training_values() {
        let ds = one_col(&[0.0, 2.0, 4.0, 0.0, 6.0]);
        let out = ds.impute_median(&["x"], &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(out.column(0).collect::<Vec<_>>(), vec![4.0, 2.0, 4.0, 4.0, 6.0]);
        assert_eq!(out.bounds()[0], (2.0, 6.0));
    }

    #[test]
    fn median_computed_on_train_rows_only() {
        let ds = one_col(&[0.0, 2.0, 4.0, 0.0, 100.0]);
        let out = ds.impute_median(&["x"], &[0, 1, 2]).unwrap();
        assert_eq!(out.row(0)[0], 3.0);
        assert_eq!(out.row(3)[0], 3.0);
        assert_eq!(out.row(4)[0], 100.0);
    }

    #[test]
    fn imputation_without_zeros_is_identity() {
        let ds = one_col(&[1.0, 2.0, 3.0]);
        assert_eq!(ds.impute_median(&["x"], &[0, 1, 2]).unwrap(), ds);
    }

    #[test]
    fn all_missing_feature_is_an_error() {
        let ds = one_col(&[0.0, 0.0, 5.0]);
        assert_eq!(
            ds.impute_median(&["x"], &[0, 1]),
            Err(DataError::AllMissing("x".into()))
        );
    }

    #[test]
    fn unknown_feature_and_bad_labels() {
        let ds = one_col(&[1.0, 2.0]);
        assert!(matches!(
            ds.impute_median(&["nope"], &[0]),
            Err(DataError::UnknownFeature(_))
        ));
        let schema = FeatureSchema::new(&["x"]).unwrap();
        assert!(matches!(
            LabeledDataset::new(schema, vec![vec![1.0]], vec![2.0]),
            Err(DataError::InvalidLabel { row: 0, .. })
        ));
    }

    #[test]
    fn standardize_two_values() {
        let ds = one_col(&[1.0, 3.0]);
        let (scaled, params) = ds.standardize(&[0, 1]).unwrap();
        assert_eq!(scaled.column(0).collect::<Vec<_>>(), vec![-1.0, 1.0]);
        assert_eq!(params.mean, vec![2.0]);
        assert_eq!(params.std, vec![1.0]);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let ds = one_col(&[5.0, 5.0, 5.0]);
        let (scaled, params) = ds.standardize(&[0, 1, 2]).unwrap();
        assert!(scaled.column(0).all(|v| v == 0.0));
        assert_eq!(params.inverse(&[0.0]), vec![5.0]);
    }

    #[test]
    fn aliases_resolve() {
        let s = FeatureSchema::pima();
        assert_eq!(s.index_of("G120"), s.index_of("Glucose"));
        assert_eq!(s.index_of("BMI"), Some(5));
        assert_eq!(s.index_of("I120"), Some(4));
        assert!(s.clone().with_alias("BMI", "Age").is_err());
    }

    proptest::proptest! {
        #[test]
        fn scaling_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let ds = one_col(&values);
            let idx: Vec<usize> = (0..values.len()).collect();
            let (scaled, params) = ds.standardize(&idx).unwrap();
            for (raw, s) in ds.rows().zip(scaled.rows()) {
                let back = params.inverse(s);
                proptest::prop_assert!((back[0] - raw[0]).abs() <= 1e-12 * raw[0].abs().max(1.0));
            }
        }

        #[test]
        fn imputation_touches_only_zeros(values in proptest::collection::vec(proptest::prop_oneof![proptest::strategy::Just(0.0f64), 1.0f64..50.0], 3..40)) {
            proptest::prop_assume!(values.iter().any(|&v| v != 0.0));
            let ds = one_col(&values);
            let idx: Vec<usize> = (0..values.len()).collect();
            let out = ds.impute_median(&["x"], &idx).unwrap();
            for (a, b) in ds.column(0).zip(out.column(0)) {
                if a != 0.0 { proptest::prop_assert_eq!(a, b); } else { proptest::prop_assert!(b != 0.0); }
            }
            let (lo, hi) = out.bounds()[0];
            proptest::prop_assert!(out.column(0).all(|v| lo <= v && v <= hi));
        }
    }
}
