//! K-fold cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ablate_no_le, fit, TrainConfig};
use crate::data::{PllDataset, SplitTag};
use crate::error::{PllError, Result};
use crate::numeric::{RngState, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
}

impl CvReport {
    pub fn from_accuracies(fold_accuracies: Vec<f64>) -> Self {
        let k = fold_accuracies.len() as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / k.max(1.0);
        let std = if fold_accuracies.len() > 1 {
            (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        CvReport {
            fold_accuracies,
            mean,
            std,
        }
    }
}

/// Shuffled partition of `0..n` into `folds` parts whose sizes differ by at most one.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(PllError::Config(format!("need 2 <= folds <= n, got {folds} folds for {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    RngState::stream(seed, Stream::Folds).shuffle(&mut idx);
    let mut out = vec![Vec::new(); folds];
    for (i, v) in idx.into_iter().enumerate() {
        out[i % folds].push(v);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Test accuracy of each fold, training on the others. Test rows need true labels.
pub fn cross_validate(data: &PllDataset, config: &TrainConfig, folds: usize, ablation: bool) -> Result<CvReport> {
    config.validate()?;
    if data.true_labels().is_none() {
        return Err(PllError::Validation("cross-validation needs true labels".into()));
    }
    let parts = fold_indices(data.len(), folds, config.seed)?;
    let accs = parts
        .par_iter()
        .map(|test_idx| {
            let train_idx: Vec<usize> = parts.iter().filter(|p| *p != test_idx).flatten().copied().collect();
            let train = data.subset(&train_idx).with_split(SplitTag::Train);
            let test = data.subset(test_idx).with_split(SplitTag::Test);
            let out = if ablation {
                ablate_no_le(&train, Some(&test), config)?
            } else {
                fit(&train, Some(&test), config)?
            };
            Ok(out.final_test_acc.expect("test set given"))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CvReport::from_accuracies(accs))
}
