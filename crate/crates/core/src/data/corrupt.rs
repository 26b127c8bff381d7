//! Candidate-set generation from clean labels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PllDataset;
use crate::error::{PllError, Result};
use crate::models::{Architecture, PredictiveModel};
use crate::numeric::{Matrix, RngState, Stream};
use crate::trainer::{fit_supervised, SupervisedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    #[default]
    Uniform,
    InstanceDependent,
}

/// The clean network behind instance-dependent flipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanModelSpec {
    pub architecture: Architecture,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for CleanModelSpec {
    fn default() -> Self {
        CleanModelSpec {
            architecture: Architecture::Linear,
            epochs: 100,
            lr: 1e-2,
            weight_decay: 1e-4,
            batch_size: 100,
        }
    }
}

impl CleanModelSpec {
    fn supervised(&self) -> SupervisedSpec {
        SupervisedSpec {
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub mode: CorruptionMode,
    pub xi_uniform: f64,
    pub clean_model: CleanModelSpec,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            mode: CorruptionMode::Uniform,
            xi_uniform: 0.5,
            clean_model: CleanModelSpec::default(),
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.xi_uniform) {
            return Err(PllError::Config(format!(
                "xi_uniform must lie in [0, 1], got {}",
                self.xi_uniform
            )));
        }
        let m = &self.clean_model;
        if m.batch_size == 0 || !(m.lr >= 0.0) || !(m.weight_decay >= 0.0) {
            return Err(PllError::Config("clean model needs batch_size >= 1 and non-negative rates".into()));
        }
        Ok(())
    }

    /// Runs the configured procedure with the corruption and clean-model streams of `seed`.
    pub fn apply(&self, clean: &PllDataset) -> Result<(PllDataset, CorruptionReport)> {
        self.apply_with(clean, None)
    }

    /// The clean model for instance-dependent flipping, trained on the clean-model stream of `seed`.
    pub fn clean_model(&self, clean: &PllDataset) -> Result<PredictiveModel> {
        self.validate()?;
        let mut model_rng = RngState::stream(self.seed, Stream::CleanModel);
        train_clean_model(clean, &self.clean_model, &mut model_rng)
    }

    /// As [`apply`](Self::apply), reusing `model` instead of training one.
    pub fn apply_with(&self, clean: &PllDataset, model: Option<&PredictiveModel>) -> Result<(PllDataset, CorruptionReport)> {
        self.validate()?;
        let mut rng = RngState::stream(self.seed, Stream::Corruption);
        let (data, mut report) = match (self.mode, model) {
            (CorruptionMode::Uniform, _) => corrupt_uniform(clean, self.xi_uniform, &mut rng)?,
            (CorruptionMode::InstanceDependent, Some(m)) => corrupt_instance_dependent(clean, m, &mut rng)?,
            (CorruptionMode::InstanceDependent, None) => {
                let m = self.clean_model(clean)?;
                corrupt_instance_dependent(clean, &m, &mut rng)?
            }
        };
        report.seed = Some(self.seed);
        Ok((data, report))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub mode: CorruptionMode,
    pub seed: Option<u64>,
    pub xi: Option<f64>,
    pub avg_candidates: f64,
    /// For each class, the share of examples where it was an incorrect label and entered the set.
    pub per_class_flip_rate: Vec<f64>,
    pub true_label_coverage: f64,
}

impl CorruptionReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::models::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

fn clean_labels(clean: &PllDataset) -> Result<&[usize]> {
    if !clean.is_clean() {
        return Err(PllError::Validation(
            "corruption needs singleton candidate sets equal to the true labels".into(),
        ));
    }
    Ok(clean.true_labels().expect("clean datasets carry labels"))
}

/// Flips each incorrect label in with probability `xi(i, j)`, one draw per pair.
fn flip(
    clean: &PllDataset,
    mode: CorruptionMode,
    xi_uniform: Option<f64>,
    mut xi: impl FnMut(usize, usize) -> f64,
    rng: &mut RngState,
) -> Result<(PllDataset, CorruptionReport)> {
    let labels = clean_labels(clean)?;
    let (n, c) = (clean.len(), clean.num_classes());
    let mut cand = clean.candidates().clone();
    let mut flipped = vec![0usize; c];
    let mut eligible = vec![0usize; c];
    for (i, &y) in labels.iter().enumerate() {
        for j in (0..c).filter(|&j| j != y) {
            eligible[j] += 1;
            if rng.bernoulli(xi(i, j)) {
                cand[(i, j)] = 1.0;
                flipped[j] += 1;
            }
        }
    }
    let data = PllDataset::new(clean.features().clone(), cand, Some(labels.to_vec()), clean.split())?;
    let covered = labels.iter().enumerate().filter(|&(i, &y)| data.candidates()[(i, y)] == 1.0).count();
    let report = CorruptionReport {
        mode,
        seed: None,
        xi: xi_uniform,
        avg_candidates: data.avg_candidates(),
        per_class_flip_rate: flipped
            .iter()
            .zip(&eligible)
            .map(|(&f, &e)| if e == 0 { 0.0 } else { f as f64 / e as f64 })
            .collect(),
        true_label_coverage: if n == 0 { 1.0 } else { covered as f64 / n as f64 },
    };
    Ok((data, report))
}

pub fn corrupt_uniform(clean: &PllDataset, xi: f64, rng: &mut RngState) -> Result<(PllDataset, CorruptionReport)> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(PllError::Config(format!("flip probability must lie in [0, 1], got {xi}")));
    }
    flip(clean, CorruptionMode::Uniform, Some(xi), |_, _| xi, rng)
}

/// Flip probabilities `f_j(x_i) / max_{k≠y_i} f_k(x_i)` from softmax confidences.
pub fn flip_probabilities(probs: &Matrix, labels: &[usize]) -> Matrix {
    let mut xi = Matrix::zeros(probs.rows(), probs.cols());
    for (i, &y) in labels.iter().enumerate() {
        let row = probs.row(i);
        let max = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, &p)| p)
            .fold(0.0, f64::max);
        if max > 0.0 {
            for (j, o) in xi.row_mut(i).iter_mut().enumerate() {
                if j != y {
                    *o = row[j] / max;
                }
            }
        }
    }
    xi
}

pub fn corrupt_instance_dependent(
    clean: &PllDataset,
    clean_model: &PredictiveModel,
    rng: &mut RngState,
) -> Result<(PllDataset, CorruptionReport)> {
    let labels = clean_labels(clean)?;
    if clean_model.classes() != clean.num_classes() {
        return Err(PllError::shape("corrupt_instance_dependent", clean.num_classes(), clean_model.classes()));
    }
    let probs = clean_model.predict(clean.features())?;
    let xi = flip_probabilities(&probs, labels);
    flip(clean, CorruptionMode::InstanceDependent, None, |i, j| xi[(i, j)], rng)
}

/// Fits a predictive model on the true labels.
pub fn train_clean_model(clean: &PllDataset, spec: &CleanModelSpec, rng: &mut RngState) -> Result<PredictiveModel> {
    let labels = clean
        .true_labels()
        .ok_or_else(|| PllError::Validation("clean model training needs true labels".into()))?;
    let targets = crate::dirichlet::LabelDistributionMatrix::one_hot(labels, clean.num_classes())?;
    let mut model = PredictiveModel::new(
        spec.architecture.clone(),
        clean.num_features(),
        clean.num_classes(),
        rng,
    );
    fit_supervised(&mut model, clean.features(), targets.dist(), &spec.supervised(), rng)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;

    fn clean(n: usize, c: usize) -> PllDataset {
        let x = Matrix::from_fn(n, 2, |i, j| (i * (j + 1)) as f64 * 0.01);
        PllDataset::supervised(x, (0..n).map(|i| i % c).collect(), c, SplitTag::Train).unwrap()
    }

    #[test]
    fn xi_extremes() {
        let d = clean(50, 4);
        let (z, r) = corrupt_uniform(&d, 0.0, &mut RngState::new(1)).unwrap();
        assert_eq!(z.candidates(), d.candidates());
        assert_eq!(r.avg_candidates, 1.0);
        let (o, r) = corrupt_uniform(&d, 1.0, &mut RngState::new(1)).unwrap();
        assert!(o.candidates().as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(r.avg_candidates, 4.0);
        assert_eq!(r.true_label_coverage, 1.0);
    }

    #[test]
    fn uniform_average() {
        let d = clean(10_000, 10);
        let (_, r) = corrupt_uniform(&d, 0.5, &mut RngState::new(5)).unwrap();
        assert!((5.35..=5.65).contains(&r.avg_candidates), "{}", r.avg_candidates);
        for rate in &r.per_class_flip_rate {
            // 9000 eligible pairs per class
            let se = (0.25f64 / 9000.0).sqrt();
            assert!((rate - 0.5).abs() < 3.0 * se + 1e-3, "{rate}");
        }
    }

    #[test]
    fn requires_clean_input() {
        let d = clean(10, 3);
        let (noisy, _) = corrupt_uniform(&d, 1.0, &mut RngState::new(2)).unwrap();
        assert!(corrupt_uniform(&noisy, 0.5, &mut RngState::new(2)).is_err());
    }

    #[test]
    fn instance_flip_probabilities() {
        let p = Matrix::from_rows(&[[0.6, 0.3, 0.1], [0.2, 0.4, 0.4], [1.0, 0.0, 0.0]]).unwrap();
        let xi = flip_probabilities(&p, &[0, 0, 0]);
        assert_eq!(&xi.row(0)[..2], &[0.0, 1.0]);
        assert!((xi[(0, 2)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(xi.row(1), &[0.0, 1.0, 1.0]);
        assert_eq!(xi.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_model_gives_full_sets() {
        let d = clean(30, 3);
        let m = PredictiveModel::zeroed(Architecture::Linear, 2, 3);
        let (o, r) = corrupt_instance_dependent(&d, &m, &mut RngState::new(4)).unwrap();
        assert!(o.candidates().as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(r.mode, CorruptionMode::InstanceDependent);
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let d = clean(20, 2);
        let spec = CleanModelSpec {
            epochs: 0,
            ..CleanModelSpec::default()
        };
        let m = train_clean_model(&d, &spec, &mut RngState::new(3)).unwrap();
        let fresh = PredictiveModel::new(Architecture::Linear, 2, 2, &mut RngState::new(3));
        assert_eq!(m.params().value(0), fresh.params().value(0));
    }
}
