//! Partially labelled datasets.

mod corrupt;
pub mod synthetic;
mod table;

pub use corrupt::{
    corrupt_instance_dependent, corrupt_uniform, train_clean_model, CleanModelSpec, CorruptionConfig,
    CorruptionMode, CorruptionReport,
};
pub use table::{load_csv, read_csv, write_csv, write_csv_to, CsvSchema};

use serde::{Deserialize, Serialize};

use crate::error::{PllError, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    #[default]
    Train,
    Test,
}

/// Features, binary candidate matrix and optional hidden true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PllDataset {
    features: Matrix,
    candidates: Matrix,
    true_labels: Option<Vec<usize>>,
    split: SplitTag,
}

impl PllDataset {
    pub fn new(
        features: Matrix,
        candidates: Matrix,
        true_labels: Option<Vec<usize>>,
        split: SplitTag,
    ) -> Result<Self> {
        if features.rows() != candidates.rows() {
            return Err(PllError::shape(
                "PllDataset",
                format!("{} candidate rows", features.rows()),
                candidates.rows(),
            ));
        }
        if candidates.cols() == 0 {
            return Err(PllError::Validation("dataset needs at least one class".into()));
        }
        if !features.is_finite() {
            return Err(PllError::NonFinite("dataset features".into()));
        }
        for (i, row) in candidates.rows_iter().enumerate() {
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(PllError::Validation(format!("candidate row {i} is not binary")));
            }
            if !row.contains(&1.0) {
                return Err(PllError::Validation(format!("candidate row {i} is empty")));
            }
        }
        if let Some(labels) = &true_labels {
            if labels.len() != candidates.rows() {
                return Err(PllError::shape("PllDataset", candidates.rows(), labels.len()));
            }
            for (i, &y) in labels.iter().enumerate() {
                if y >= candidates.cols() || candidates[(i, y)] != 1.0 {
                    return Err(PllError::Validation(format!(
                        "row {i}: true label {y} is not in its candidate set"
                    )));
                }
            }
        }
        Ok(PllDataset {
            features,
            candidates,
            true_labels,
            split,
        })
    }

    /// Singleton candidate sets equal to `labels`.
    pub fn supervised(features: Matrix, labels: Vec<usize>, classes: usize, split: SplitTag) -> Result<Self> {
        let mut cand = Matrix::zeros(labels.len(), classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(PllError::Validation(format!("row {i}: label {y} >= class count {classes}")));
            }
            cand[(i, y)] = 1.0;
        }
        Self::new(features, cand, Some(labels), split)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.candidates.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// The logical label matrix.
    pub fn candidates(&self) -> &Matrix {
        &self.candidates
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(PllError::shape("with_features", self.len(), features.rows()));
        }
        self.features = features;
        Ok(self)
    }

    pub fn candidate_set(&self, i: usize) -> Vec<usize> {
        self.candidates
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn avg_candidates(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.candidates.sum() / self.len() as f64
    }

    /// True when each candidate set is exactly `{true label}`.
    pub fn is_clean(&self) -> bool {
        match &self.true_labels {
            Some(_) => self.candidates.rows_iter().all(|r| r.iter().sum::<f64>() == 1.0),
            None => false,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> PllDataset {
        PllDataset {
            features: self.features.select_rows(idx),
            candidates: self.candidates.select_rows(idx),
            true_labels: self.true_labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            split: self.split,
        }
    }
}

/// Per-column z-scores; constant columns are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let means: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for r in x.rows_iter() {
            for (j, v) in r.iter().enumerate() {
                var[j] += (v - means[j]).powi(2);
            }
        }
        let stds = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(PllError::shape("Standardizer::apply", self.means.len(), x.cols()));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.means[j]) / self.stds[j]))
    }
}
