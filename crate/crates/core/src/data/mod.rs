//! Datasets, loaders and evaluation metrics.

mod csv_io;
mod idx;
pub mod metrics;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use csv_io::{load_csv, write_csv};
pub use idx::load_idx;
pub use metrics::{accuracy, silhouette_coefficient};

/// Per-feature statistics used to standardize a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation, or 1 for constant columns.
    pub std: Vec<f64>,
}

impl Standardization {
    /// Column statistics of a `[n, d]` matrix.
    pub fn fit(features: &Tensor) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::Input(format!(
                "standardization needs tabular [n, d] features, got {:?}",
                features.shape()
            )));
        }
        let (n, d) = (features.shape()[0], features.shape()[1]);
        let mut mean = vec![0.0; d];
        for row in features.data().chunks_exact(d.max(1)) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for row in features.data().chunks_exact(d.max(1)) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardization { mean, std })
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if features.rank() != 2 || features.shape()[1] != d {
            return Err(Error::Dimension {
                op: "standardize",
                lhs: features.shape().to_vec(),
                rhs: vec![d],
            });
        }
        let mut out = features.clone();
        for row in out.data_mut().chunks_exact_mut(d.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[n, d]` for tabular data or `[n, c, h, w]` for images.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rank() < 2 || features.rows() != labels.len() {
            return Err(Error::Input(format!(
                "{} labels for features of shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Input(format!("need at least two classes, got {n_classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Input(format!("label {bad} outside [0, {n_classes})")));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
            feature_names: vec![],
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            standardization: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one sample, e.g. `[13]` or `[1, 28, 28]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn n_features(&self) -> usize {
        self.features.row_len()
    }

    pub fn is_tabular(&self) -> bool {
        self.features.rank() == 2
    }

    pub fn one_hot(&self) -> Tensor {
        one_hot(&self.labels, self.n_classes).expect("labels validated at construction")
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        }
    }

    /// Tabular dataset restricted to the given feature columns, in that order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Dataset> {
        if !self.is_tabular() {
            return Err(Error::Input("feature selection needs tabular data".into()));
        }
        let d = self.n_features();
        if let Some(bad) = columns.iter().find(|&&c| c >= d) {
            return Err(Error::Input(format!("feature index {bad} outside [0, {d})")));
        }
        let mut data = Vec::with_capacity(self.len() * columns.len());
        for i in 0..self.len() {
            let row = self.features.row(i);
            data.extend(columns.iter().map(|&c| row[c]));
        }
        let mut out = self.clone_meta();
        out.features = Tensor::new(vec![self.len(), columns.len()], data)?;
        out.labels = self.labels.clone();
        if !self.feature_names.is_empty() {
            out.feature_names = columns.iter().map(|&c| self.feature_names[c].clone()).collect();
        }
        out.standardization = self.standardization.as_ref().map(|s| Standardization {
            mean: columns.iter().map(|&c| s.mean[c]).collect(),
            std: columns.iter().map(|&c| s.std[c]).collect(),
        });
        Ok(out)
    }

    /// Standardizes every column with this dataset's own statistics.
    pub fn standardize(&self) -> Result<Dataset> {
        let stats = Standardization::fit(&self.features)?;
        self.standardize_with(&stats)
    }

    /// Applies previously fitted statistics (e.g. from a training fold).
    pub fn standardize_with(&self, stats: &Standardization) -> Result<Dataset> {
        let mut out = self.clone();
        out.features = stats.apply(&self.features)?;
        out.standardization = Some(stats.clone());
        Ok(out)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            features: Tensor::zeros(&[0]),
            labels: vec![],
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            standardization: self.standardization.clone(),
        }
    }
}

/// Rows with a single 1 at each label's index.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::Input(format!("label {l} outside [0, {n_classes})")));
        }
        t.data_mut()[i * n_classes + l] = 1.0;
    }
    Ok(t)
}
