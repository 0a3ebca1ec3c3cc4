//! Sparse sample-major datasets with ±1 labels.

mod libsvm;
mod synth;

pub use libsvm::{load_libsvm, parse_libsvm, write_libsvm, LabelMapping};
pub use synth::{synth_dataset, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::{self, tags};
use crate::Scalar;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<T> {
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn new() -> Self {
        Self { indices: Vec::new(), values: Vec::new() }
    }

    /// Builds a vector from parallel arrays. Indices must be strictly increasing.
    pub fn from_parts(indices: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(config("index and value arrays differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config("sparse indices must be strictly increasing"));
        }
        Ok(Self { indices, values })
    }

    /// Builds a vector from `(index, value)` pairs that are already sorted.
    pub fn from_pairs<I: IntoIterator<Item = (usize, T)>>(pairs: I) -> Result<Self> {
        let (indices, values) = pairs.into_iter().unzip();
        Self::from_parts(indices, values)
    }

    pub fn from_dense(dense: &[T]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, &v)| (i, v))
            .unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Dot product against a dense vector. Indices must be in range.
    #[inline]
    pub fn dot(&self, dense: &[T]) -> T {
        let mut acc = T::zero();
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            acc += v * dense[i];
        }
        acc
    }

    /// `dense += scale * self`
    #[inline]
    pub fn axpy_into(&self, scale: T, dense: &mut [T]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            dense[i] += scale * v;
        }
    }

    pub fn norm_sq(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Keeps only entries whose index is in the sorted `keep` list and
    /// re-indexes them to their position within `keep`.
    pub fn restrict_to(&self, keep: &[usize]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut pos = 0;
        for (i, v) in self.iter() {
            while pos < keep.len() && keep[pos] < i {
                pos += 1;
            }
            if pos == keep.len() {
                break;
            }
            if keep[pos] == i {
                indices.push(pos);
                values.push(v);
            }
        }
        Self { indices, values }
    }

    pub(crate) fn push(&mut self, index: usize, value: T) {
        debug_assert!(self.indices.last().map_or(true, |&l| l < index));
        self.indices.push(index);
        self.values.push(value);
    }

    pub fn cast<U: Scalar>(&self) -> SparseVector<U> {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Sample-major sparse feature matrix with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset<T> {
    name: String,
    n_features: usize,
    samples: Vec<SparseVector<T>>,
    labels: Vec<T>,
}

impl<T: Scalar> SparseDataset<T> {
    pub fn new(
        name: impl Into<String>,
        n_features: usize,
        samples: Vec<SparseVector<T>>,
        labels: Vec<T>,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(config(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some((i, _)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y != T::one() && y != -T::one())
        {
            return Err(config(format!("label of sample {i} is not ±1")));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| s.max_index().is_some_and(|m| m >= n_features))
        {
            return Err(config(format!(
                "sample {i} has a feature index beyond {n_features} features"
            )));
        }
        Ok(Self { name: name.into(), n_features, samples, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn samples(&self) -> &[SparseVector<T>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &SparseVector<T> {
        &self.samples[i]
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> T {
        self.labels[i]
    }

    pub fn nnz(&self) -> usize {
        self.samples.iter().map(SparseVector::nnz).sum()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Subset of samples in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            n_features: self.n_features,
            samples: rows.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Appends a constant feature at index `n_features` to every sample.
    pub fn with_constant_feature(&self, value: T) -> Self {
        let idx = self.n_features;
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if !value.is_zero() {
                    s.push(idx, value);
                }
                s
            })
            .collect();
        Self {
            name: self.name.clone(),
            n_features: self.n_features + 1,
            samples,
            labels: self.labels.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> SparseDataset<U> {
        SparseDataset {
            name: self.name.clone(),
            n_features: self.n_features,
            samples: self.samples.iter().map(SparseVector::cast).collect(),
            labels: self.labels.iter().map(|y| U::lit(y.to_f64_lossy())).collect(),
        }
    }

    pub fn max_norm(&self) -> T {
        self.samples
            .iter()
            .map(|s| s.norm_sq().sqrt())
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub n_features: usize,
    pub nnz: usize,
    /// Fraction of zero entries in the full `N x M` matrix.
    pub sparsity: f64,
}

pub fn compute_stats<T: Scalar>(ds: &SparseDataset<T>) -> DatasetStats {
    let nnz = ds.nnz();
    let total = ds.n_samples() as f64 * ds.n_features() as f64;
    let sparsity = if total == 0.0 { 1.0 } else { 1.0 - nnz as f64 / total };
    DatasetStats { n_samples: ds.n_samples(), n_features: ds.n_features(), nnz, sparsity }
}

/// Scales every sample with `‖x‖₂ > 1` onto the unit sphere. Other samples are
/// returned bit-for-bit unchanged, so the operation is idempotent.
pub fn normalize_samples<T: Scalar>(ds: &SparseDataset<T>) -> SparseDataset<T> {
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            let norm = s.norm_sq().sqrt();
            let mut s = s.clone();
            if norm > T::one() {
                s.scale(T::one() / norm);
                // rounding can leave the norm a hair above one; a second pass
                // always lands at or below it
                let again = s.norm_sq().sqrt();
                if again > T::one() {
                    s.scale(T::one() / again);
                }
            }
            s
        })
        .collect();
    SparseDataset {
        name: ds.name.clone(),
        n_features: ds.n_features,
        samples,
        labels: ds.labels.clone(),
    }
}

/// Seeded shuffle split into `(train, validation)`. `train_fraction` of the
/// samples (rounded) go to the training side; both sides keep at least one
/// sample when the dataset has two or more.
pub fn train_validation_split<T: Scalar>(
    ds: &SparseDataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(SparseDataset<T>, SparseDataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(config("train fraction must lie in (0, 1]"));
    }
    use rand::seq::SliceRandom;
    let n = ds.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, tags::SPLIT, &[]));
    let mut n_train = ((n as f64) * train_fraction).round() as usize;
    if train_fraction < 1.0 && n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let (train_idx, val_idx) = order.split_at(n_train.min(n));
    Ok((ds.select(train_idx), ds.select(val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> SparseDataset<f64> {
        let m = rows.first().map_or(0, Vec::len);
        let samples = rows.iter().map(|r| SparseVector::from_dense(r)).collect();
        SparseDataset::new("t", m, samples, labels).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let d = ds(vec![vec![3.0, 4.0], vec![0.3, 0.4], vec![0.0, 0.0]], vec![1.0, -1.0, 1.0]);
        let n = normalize_samples(&d);
        let v = n.sample(0).values();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert!((n.sample(0).norm_sq().sqrt() - 1.0).abs() < 1e-15);
        assert_eq!(n.sample(1), d.sample(1));
        assert!(n.sample(2).is_empty());
    }

    #[test]
    fn normalize_is_idempotent() {
        let d = ds(vec![vec![1.0, 2.0, 3.0], vec![0.1, 0.0, -7.0]], vec![1.0, -1.0]);
        let once = normalize_samples(&d);
        assert_eq!(normalize_samples(&once), once);
        assert!(once.max_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn stats_extremes() {
        let dense = ds(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![1.0, 1.0]);
        assert_eq!(compute_stats(&dense).sparsity, 0.0);
        let zero = ds(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, -1.0]);
        assert_eq!(compute_stats(&zero).sparsity, 1.0);
    }

    #[test]
    fn rejects_bad_labels_and_indices() {
        let s = vec![SparseVector::from_dense(&[1.0])];
        assert!(SparseDataset::new("x", 1, s.clone(), vec![0.5]).is_err());
        assert!(SparseDataset::new("x", 0, s, vec![1.0]).is_err());
    }

    #[test]
    fn restrict_reindexes() {
        let v = SparseVector::from_dense(&[1.0, 0.0, 2.0, 3.0, 0.0, 4.0]);
        let r = v.restrict_to(&[2, 4, 5]);
        assert_eq!(r.indices(), &[0, 2]);
        assert_eq!(r.values(), &[2.0, 4.0]);
    }

    #[test]
    fn split_is_seeded_partition() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = ds(rows, vec![1.0; 10]);
        let (a, b) = train_validation_split(&d, 0.8, 3).unwrap();
        let (a2, _) = train_validation_split(&d, 0.8, 3).unwrap();
        assert_eq!(a.n_samples(), 8);
        assert_eq!(b.n_samples(), 2);
        assert_eq!(a, a2);
        let mut seen: Vec<f64> = a
            .samples()
            .iter()
            .chain(b.samples())
            .map(|s| s.values().first().copied().unwrap_or(0.0))
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }
}
