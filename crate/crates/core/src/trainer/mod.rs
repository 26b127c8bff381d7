//! Warm-up, graph construction and the joint per-epoch update.

mod config;
mod cv;
mod run_dir;

pub use config::{GraphRefresh, LabelEstimate, OptimSettings, TrainConfig};
pub use cv::{cross_validate, fold_indices, CvReport};
pub use run_dir::{losses_csv, metrics_csv, write_run, CONFIG_JSON, LOSSES_CSV, METRICS_CSV};

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::data::PllDataset;
use crate::dirichlet::{
    average_samples, dirichlet_mean, kl_on_tape, sample_on_tape, DirichletParams, DirichletPrior,
    LabelDistributionMatrix,
};
use crate::error::{PllError, Result};
use crate::graph::{build_knn_graph_with, AffinityGraph};
use crate::models::{ModelBundle, PredictiveModel};
use crate::numeric::{AdamConfig, Matrix, ParamStore, RngState, Stream, Tape};
use crate::objectives::{
    bernoulli_on_tape, candidate_confidence, expected_compatibility_on_tape, graph_on_tape, risk_weights,
    weighted_nll_on_tape, LossReport,
};

/// Plain mini-batch cross-entropy fitting against fixed soft targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSpec {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

fn batches(n: usize, batch: usize, rng: &mut RngState) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}

fn adam(o: &OptimSettings, scale: f64) -> AdamConfig {
    AdamConfig {
        lr: o.lr * scale,
        weight_decay: o.weight_decay,
        ..AdamConfig::default()
    }
}

/// Minimizes `−(1/n) Σ targets ∘ ln f(x)`; returns the mean loss of each epoch.
pub fn fit_supervised(
    model: &mut PredictiveModel,
    x: &Matrix,
    targets: &Matrix,
    spec: &SupervisedSpec,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    if x.rows() != targets.rows() || targets.cols() != model.classes() {
        return Err(PllError::shape("fit_supervised", format!("{:?}", x.shape()), format!("{:?}", targets.shape())));
    }
    let cfg = AdamConfig {
        lr: spec.lr,
        weight_decay: spec.weight_decay,
        ..AdamConfig::default()
    };
    let mut losses = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        let mut total = 0.0;
        for (step, b) in batches(x.rows(), spec.batch_size, rng).into_iter().enumerate() {
            let mut tape = Tape::new();
            let xv = tape.input(x.select_rows(&b));
            let out = model.forward(&mut tape, xv)?;
            let loss = weighted_nll_on_tape(&mut tape, out.logits, &targets.select_rows(&b), 1.0 / b.len() as f64)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(PllError::NonFinite(format!(
                    "supervised loss at epoch {epoch}, step {step}"
                )));
            }
            total += value * b.len() as f64;
            let grads = tape.backward(loss)?;
            let params = model.params_mut();
            params.accumulate(&tape, &grads)?;
            params.adam_step_with(&cfg)?;
        }
        losses.push(total / x.rows().max(1) as f64);
    }
    Ok(losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    LabelEnhancement,
    Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// One-based epoch number, warm-up included.
    pub epoch: usize,
    pub phase: Phase,
    /// Example-weighted mean of the batch reports.
    pub losses: LossReport,
    pub test_acc: Option<f64>,
    pub le_quality: Option<f64>,
    pub d_convergence: Option<f64>,
    pub skipped_batches: usize,
}

/// Everything carried between epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub bundle: ModelBundle,
    pub phi: Option<Matrix>,
    pub graph: Option<AffinityGraph>,
    /// Label distributions at the end of the latest and previous epochs.
    pub current_d: Option<LabelDistributionMatrix>,
    pub previous_d: Option<LabelDistributionMatrix>,
    pub history: Vec<EpochMetrics>,
    pub step_log: Vec<LossReport>,
    inference_lr_scale: f64,
    shuffle_rng: RngState,
    sampling_rng: RngState,
}

impl TrainState {
    pub fn new(dataset: &PllDataset, config: &TrainConfig) -> Self {
        let mut init = RngState::stream(config.seed, Stream::Init);
        let bundle = ModelBundle::new(
            config.architecture.clone(),
            dataset.num_features(),
            dataset.num_classes(),
            config.gcn_hidden,
            config.observation_hidden,
            &mut init,
        );
        TrainState {
            epoch: 0,
            bundle,
            phi: None,
            graph: None,
            current_d: None,
            previous_d: None,
            history: Vec::new(),
            step_log: Vec::new(),
            inference_lr_scale: 1.0,
            shuffle_rng: RngState::stream(config.seed, Stream::Shuffle),
            sampling_rng: RngState::stream(config.seed, Stream::Sampling),
        }
    }

    pub fn inference_lr_scale(&self) -> f64 {
        self.inference_lr_scale
    }

    pub fn predictive(&self) -> &PredictiveModel {
        &self.bundle.predictive
    }
}

fn accumulate_report(acc: &mut LossReport, r: &LossReport, w: f64) {
    acc.total += w * r.total;
    acc.min_loss += w * r.min_loss;
    acc.kl += w * r.kl;
    acc.recon_label += w * r.recon_label;
    acc.recon_graph += w * r.recon_graph;
    acc.compat += w * r.compat;
    acc.risk += w * r.risk;
}

/// One pass of the weighted minimal loss over θ. Non-finite batches abort when `strict`, else they are skipped.
fn min_loss_epoch(
    dataset: &PllDataset,
    config: &TrainConfig,
    state: &mut TrainState,
    strict: bool,
) -> Result<(LossReport, usize)> {
    let cfg = adam(&config.predictive, 1.0);
    let mut mean = LossReport::default();
    let mut skipped = 0;
    let n = dataset.len() as f64;
    for b in batches(dataset.len(), config.batch_size, &mut state.shuffle_rng) {
        let mut tape = Tape::new();
        let xv = tape.input(dataset.features().select_rows(&b));
        let out = state.bundle.predictive.forward(&mut tape, xv)?;
        let probs = tape.value(out.logits).softmax_rows();
        let zeta = candidate_confidence(&probs, &dataset.candidates().select_rows(&b))?;
        let loss = weighted_nll_on_tape(&mut tape, out.logits, &zeta, 1.0 / b.len() as f64)?;
        let report = LossReport {
            min_loss: tape.scalar(loss),
            ..LossReport::default()
        }
        .with_total(config.lambda);
        if !report.is_finite() {
            if strict {
                return Err(PllError::NonFinite(format!("minimal loss in epoch {}", state.epoch + 1)));
            }
            skipped += 1;
            continue;
        }
        let grads = tape.backward(loss)?;
        let params = state.bundle.predictive.params_mut();
        params.accumulate(&tape, &grads)?;
        if !params.grads_finite() {
            params.zero_grad();
            if strict {
                return Err(PllError::NonFinite(format!("minimal-loss gradient in epoch {}", state.epoch + 1)));
            }
            skipped += 1;
            continue;
        }
        params.adam_step_with(&cfg)?;
        accumulate_report(&mut mean, &report, b.len() as f64 / n);
        state.step_log.push(report);
    }
    Ok((mean, skipped))
}

/// Warm-up epochs on θ only. A non-finite loss aborts with `state` holding the last good parameters.
pub fn warmup(
    dataset: &PllDataset,
    test: Option<&PllDataset>,
    config: &TrainConfig,
    state: &mut TrainState,
) -> Result<()> {
    for _ in 0..config.warmup_epochs {
        let (losses, skipped) = min_loss_epoch(dataset, config, state, true)?;
        state.epoch += 1;
        let evaluate_now = state.epoch % config.eval_every == 0;
        state.history.push(EpochMetrics {
            epoch: state.epoch,
            phase: Phase::Warmup,
            losses,
            test_acc: if evaluate_now { test_accuracy(state, test)? } else { None },
            le_quality: None,
            d_convergence: None,
            skipped_batches: skipped,
        });
    }
    Ok(())
}

/// Extracts Φ, builds the graph, and records the current label distributions.
pub fn build_epoch_context(dataset: &PllDataset, state: &mut TrainState, config: &TrainConfig) -> Result<()> {
    let phi = state.bundle.predictive.extract_features(dataset.features())?;
    let graph = build_knn_graph_with(&phi, &config.graph_options())?;
    state.phi = Some(phi);
    state.graph = Some(graph);
    if state.current_d.is_none() {
        state.current_d = Some(label_distributions(dataset, state, config)?);
    }
    Ok(())
}

fn context(state: &TrainState) -> Result<(&Matrix, &AffinityGraph)> {
    match (&state.phi, &state.graph) {
        (Some(p), Some(g)) => Ok((p, g)),
        _ => Err(PllError::Validation("epoch context has not been built".into())),
    }
}

pub fn infer_alphas(dataset: &PllDataset, state: &TrainState) -> Result<DirichletParams> {
    let (phi, graph) = context(state)?;
    state.bundle.inference.infer_alphas(dataset.candidates(), phi, graph)
}

/// Posterior mean over the whole training set.
pub fn label_distributions(
    dataset: &PllDataset,
    state: &TrainState,
    _config: &TrainConfig,
) -> Result<LabelDistributionMatrix> {
    Ok(dirichlet_mean(&infer_alphas(dataset, state)?))
}

/// One epoch of the joint update of θ, w and η.
pub fn train_epoch(dataset: &PllDataset, state: &mut TrainState, config: &TrainConfig) -> Result<(LossReport, usize)> {
    let (phi, graph) = context(state)?;
    let z = phi.concat_cols(dataset.candidates())?;
    let adj = Rc::new(graph.normalized().clone());
    let graph = graph.clone();
    let prior = DirichletPrior::new(config.epsilon)?;
    let n = dataset.len() as f64;
    let mut mean = LossReport::default();
    let mut skipped = 0;
    let mut halved = false;

    for b in batches(dataset.len(), config.batch_size, &mut state.shuffle_rng) {
        let nb = b.len() as f64;
        let cands = dataset.candidates().select_rows(&b);
        let mut tape = Tape::new();

        let xv = tape.input(dataset.features().select_rows(&b));
        let out = state.bundle.predictive.forward(&mut tape, xv)?;
        let zv = tape.input(z.clone());
        let alpha = state.bundle.inference.forward(&mut tape, zv, &adj, b.clone())?;
        let alpha_now = DirichletParams::new(tape.value(alpha).clone())?;

        let d_risk = match config.label_estimate {
            LabelEstimate::Mean => dirichlet_mean(&alpha_now),
            LabelEstimate::Samples { count } => average_samples(&alpha_now, count, &mut state.sampling_rng)?,
        };
        let risk = weighted_nll_on_tape(&mut tape, out.logits, &risk_weights(&cands, &d_risk)?, 1.0 / nb)?;

        let probs = tape.value(out.logits).softmax_rows();
        let zeta = candidate_confidence(&probs, &cands)?;
        let compat = expected_compatibility_on_tape(&mut tape, alpha, &zeta, 1.0 / nb)?;
        let kl = kl_on_tape(&mut tape, alpha, &prior, 1.0 / nb)?;

        let a_batch = graph.adjacency_submatrix(&b);
        let m = config.mc_samples as f64;
        let mut recon_label = None;
        let mut recon_graph = None;
        for _ in 0..config.mc_samples {
            let (d, _) = sample_on_tape(&mut tape, alpha, &mut state.sampling_rng)?;
            let u = state.bundle.observation.forward_logits(&mut tape, d)?;
            let rl = bernoulli_on_tape(&mut tape, u, &cands)?;
            let rg = graph_on_tape(&mut tape, d, &a_batch)?;
            let rl = tape.scale(rl, 1.0 / (m * nb));
            let rg = tape.scale(rg, 1.0 / (m * nb * nb));
            recon_label = Some(match recon_label {
                None => rl,
                Some(acc) => tape.add(acc, rl)?,
            });
            recon_graph = Some(match recon_graph {
                None => rg,
                Some(acc) => tape.add(acc, rg)?,
            });
        }
        let (recon_label, recon_graph) = (recon_label.expect("mc_samples >= 1"), recon_graph.expect("mc_samples >= 1"));

        let report = LossReport {
            kl: tape.scalar(kl),
            recon_label: tape.scalar(recon_label),
            recon_graph: tape.scalar(recon_graph),
            compat: tape.scalar(compat),
            risk: tape.scalar(risk),
            ..LossReport::default()
        }
        .with_total(config.lambda);

        let lc = tape.scale(compat, config.lambda);
        let t1 = tape.add(risk, lc)?;
        let t2 = tape.add(t1, kl)?;
        let t3 = tape.sub(t2, recon_label)?;
        let total = tape.sub(t3, recon_graph)?;

        let bad = |state: &mut TrainState, halved: &mut bool| {
            if !*halved {
                state.inference_lr_scale *= 0.5;
                *halved = true;
            }
        };
        if !report.is_finite() || !tape.scalar(total).is_finite() {
            skipped += 1;
            bad(state, &mut halved);
            continue;
        }
        let grads = tape.backward(total)?;
        let bundle = &mut state.bundle;
        let stores: [&mut ParamStore; 3] = [
            bundle.predictive.params_mut(),
            bundle.inference.params_mut(),
            bundle.observation.params_mut(),
        ];
        let mut finite = true;
        for s in stores {
            s.accumulate(&tape, &grads)?;
            finite &= s.grads_finite();
        }
        if !finite {
            bundle.predictive.params_mut().zero_grad();
            bundle.inference.params_mut().zero_grad();
            bundle.observation.params_mut().zero_grad();
            skipped += 1;
            bad(state, &mut halved);
            continue;
        }
        let scale = state.inference_lr_scale;
        let bundle = &mut state.bundle;
        bundle.predictive.params_mut().adam_step_with(&adam(&config.predictive, 1.0))?;
        bundle.inference.params_mut().adam_step_with(&adam(&config.inference, scale))?;
        bundle.observation.params_mut().adam_step_with(&adam(&config.observation, 1.0))?;
        accumulate_report(&mut mean, &report, nb / n);
        state.step_log.push(report);
    }
    Ok((mean, skipped))
}

/// `‖D_t − D_{t−1}‖_F / n`.
pub fn convergence_metric(previous: &LabelDistributionMatrix, current: &LabelDistributionMatrix) -> Result<f64> {
    let diff = current.dist().sub(previous.dist())?;
    Ok(diff.frobenius_norm() / current.rows().max(1) as f64)
}

/// Top-1 accuracy on a labelled dataset.
pub fn evaluate(model: &PredictiveModel, test: &PllDataset) -> Result<f64> {
    let labels = test
        .true_labels()
        .ok_or_else(|| PllError::Validation("evaluation needs true labels".into()))?;
    let pred = model.predict(test.features())?.argmax_rows();
    Ok(accuracy(&pred, labels))
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

/// Share of rows whose most likely label is the true one.
pub fn le_quality(d: &LabelDistributionMatrix, labels: &[usize]) -> f64 {
    accuracy(&d.argmax(), labels)
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub final_test_acc: Option<f64>,
    pub ablation: bool,
}

impl TrainOutcome {
    pub fn history(&self) -> &[EpochMetrics] {
        &self.state.history
    }

    pub fn convergence_curve(&self) -> Vec<f64> {
        self.state.history.iter().filter_map(|m| m.d_convergence).collect()
    }
}

fn test_accuracy(state: &TrainState, test: Option<&PllDataset>) -> Result<Option<f64>> {
    test.map(|t| evaluate(&state.bundle.predictive, t)).transpose()
}

/// Warm-up, context, then the remaining epochs of joint training.
pub fn fit(train: &PllDataset, test: Option<&PllDataset>, config: &TrainConfig) -> Result<TrainOutcome> {
    fit_with(train, test, config, &mut |_| {})
}

pub fn fit_with(
    train: &PllDataset,
    test: Option<&PllDataset>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut state = TrainState::new(train, config);
    let final_test_acc = run(train, test, config, &mut state, observer)?;
    Ok(TrainOutcome {
        state,
        final_test_acc,
        ablation: false,
    })
}

/// Drives `state` through the whole schedule; on error it keeps the last completed update.
pub fn run(
    train: &PllDataset,
    test: Option<&PllDataset>,
    config: &TrainConfig,
    state: &mut TrainState,
    observer: &mut dyn FnMut(&EpochMetrics),
) -> Result<Option<f64>> {
    config.validate()?;
    let seen = state.history.len();
    warmup(train, test, config, state)?;
    for m in &state.history[seen..] {
        observer(m);
    }
    build_epoch_context(train, state, config)?;
    while state.epoch < config.total_epochs {
        if config.graph_refresh == GraphRefresh::PerEpoch && state.epoch > config.warmup_epochs {
            build_epoch_context(train, state, config)?;
        }
        let (losses, skipped) = train_epoch(train, state, config)?;
        state.epoch += 1;
        let d = label_distributions(train, state, config)?;
        let conv = match &state.current_d {
            Some(prev) => Some(convergence_metric(prev, &d)?),
            None => None,
        };
        let evaluate_now = state.epoch % config.eval_every == 0 || state.epoch == config.total_epochs;
        let metrics = EpochMetrics {
            epoch: state.epoch,
            phase: Phase::LabelEnhancement,
            losses,
            test_acc: if evaluate_now { test_accuracy(state, test)? } else { None },
            le_quality: train.true_labels().map(|l| le_quality(&d, l)),
            d_convergence: conv,
            skipped_batches: skipped,
        };
        observer(&metrics);
        state.history.push(metrics);
        state.previous_d = state.current_d.replace(d);
    }
    test_accuracy(state, test)
}

/// The weighted minimal loss alone for the whole epoch budget.
pub fn ablate_no_le(train: &PllDataset, test: Option<&PllDataset>, config: &TrainConfig) -> Result<TrainOutcome> {
    ablate_no_le_with(train, test, config, &mut |_| {})
}

pub fn ablate_no_le_with(
    train: &PllDataset,
    test: Option<&PllDataset>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut state = TrainState::new(train, config);
    let final_test_acc = run_ablation(train, test, config, &mut state, observer)?;
    Ok(TrainOutcome {
        state,
        final_test_acc,
        ablation: true,
    })
}

pub fn run_ablation(
    train: &PllDataset,
    test: Option<&PllDataset>,
    config: &TrainConfig,
    state: &mut TrainState,
    observer: &mut dyn FnMut(&EpochMetrics),
) -> Result<Option<f64>> {
    config.validate()?;
    while state.epoch < config.total_epochs {
        let (losses, skipped) = min_loss_epoch(train, config, state, false)?;
        state.epoch += 1;
        let evaluate_now = state.epoch % config.eval_every == 0 || state.epoch == config.total_epochs;
        let metrics = EpochMetrics {
            epoch: state.epoch,
            phase: Phase::Ablation,
            losses,
            test_acc: if evaluate_now { test_accuracy(state, test)? } else { None },
            le_quality: None,
            d_convergence: None,
            skipped_batches: skipped,
        };
        observer(&metrics);
        state.history.push(metrics);
    }
    test_accuracy(state, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::BlobSpec;
    use crate::data::{corrupt_uniform, SplitTag};

    fn blobs(n: usize, seed: u64) -> PllDataset {
        BlobSpec::separable()
            .sample(n, SplitTag::Train, &mut RngState::new(seed))
            .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            warmup_epochs: 2,
            total_epochs: 5,
            batch_size: 32,
            gcn_hidden: 8,
            observation_hidden: (8, 8),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn convergence_metric_examples() {
        let a = LabelDistributionMatrix::one_hot(&[0, 1, 2, 2], 3).unwrap();
        assert_eq!(convergence_metric(&a, &a).unwrap(), 0.0);
        let b = LabelDistributionMatrix::one_hot(&[1, 0, 2, 2], 3).unwrap();
        assert!((convergence_metric(&a, &b).unwrap() - 2.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation() {
        let d = blobs(60, 1);
        assert!(evaluate(&PredictiveModel::zeroed(Default::default(), 2, 3), &d).is_ok());
        let onehot = LabelDistributionMatrix::one_hot(d.true_labels().unwrap(), 3).unwrap();
        assert_eq!(le_quality(&onehot, d.true_labels().unwrap()), 1.0);
        let unlabelled = PllDataset::new(d.features().clone(), d.candidates().clone(), None, SplitTag::Test).unwrap();
        assert!(evaluate(&PredictiveModel::zeroed(Default::default(), 2, 3), &unlabelled).is_err());
    }

    #[test]
    fn warmup_zero_epochs_leaves_state() {
        let d = blobs(40, 2);
        let cfg = TrainConfig {
            warmup_epochs: 0,
            ..small_config()
        };
        let mut s = TrainState::new(&d, &cfg);
        let before = s.bundle.predictive.params().value(0).clone();
        warmup(&d, None, &cfg, &mut s).unwrap();
        assert_eq!(s.bundle.predictive.params().value(0), &before);
        assert!(s.history.is_empty());
    }

    #[test]
    fn warmup_accuracy_rises_on_separable_blobs() {
        let d = blobs(300, 3);
        let cfg = TrainConfig {
            warmup_epochs: 1,
            ..small_config()
        };
        let mut s = TrainState::new(&d, &cfg);
        let mut accs = vec![evaluate(s.predictive(), &d).unwrap()];
        for _ in 0..12 {
            warmup(&d, None, &cfg, &mut s).unwrap();
            accs.push(evaluate(s.predictive(), &d).unwrap());
        }
        assert!(accs[..4].windows(2).all(|w| w[1] >= w[0]), "{accs:?}");
        assert!(accs[12] > 0.97, "{accs:?}");
        assert_eq!(s.inference_lr_scale(), 1.0);
        assert_eq!(s.bundle.inference.params().step_count(), 0);
        assert_eq!(s.bundle.observation.params().step_count(), 0);
    }

    #[test]
    fn full_batch_is_one_step() {
        let d = blobs(50, 4);
        let cfg = TrainConfig {
            batch_size: 50,
            ..small_config()
        };
        let mut s = TrainState::new(&d, &cfg);
        build_epoch_context(&d, &mut s, &cfg).unwrap();
        train_epoch(&d, &mut s, &cfg).unwrap();
        assert_eq!(s.bundle.inference.params().step_count(), 1);
        assert_eq!(s.step_log.len(), 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = blobs(80, 5);
        let (noisy, _) = corrupt_uniform(&d, 0.5, &mut RngState::new(9)).unwrap();
        let a = fit(&noisy, Some(&d), &small_config()).unwrap();
        let b = fit(&noisy, Some(&d), &small_config()).unwrap();
        assert_eq!(a.history(), b.history());
    }

    #[test]
    fn zero_learning_rates_freeze_everything() {
        let d = blobs(60, 6);
        let zero = OptimSettings { lr: 0.0, weight_decay: 0.1 };
        let cfg = TrainConfig {
            predictive: zero,
            inference: zero,
            observation: zero,
            ..small_config()
        };
        let fresh = TrainState::new(&d, &cfg);
        let out = fit(&d, None, &cfg).unwrap();
        for (a, b) in [
            (fresh.bundle.predictive.params(), out.state.bundle.predictive.params()),
            (fresh.bundle.inference.params(), out.state.bundle.inference.params()),
            (fresh.bundle.observation.params(), out.state.bundle.observation.params()),
        ] {
            for (p, q) in a.iter().zip(b.iter()) {
                assert_eq!(p.value, q.value, "{}", p.name);
            }
        }
    }

    #[test]
    fn label_distributions_stay_on_simplex() {
        let d = blobs(90, 7);
        let (noisy, _) = corrupt_uniform(&d, 0.5, &mut RngState::new(1)).unwrap();
        let out = fit(&noisy, None, &small_config()).unwrap();
        let dist = out.state.current_d.clone().unwrap();
        for r in dist.dist().rows_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.iter().all(|&v| v >= 0.0));
        }
        assert!(out.history().iter().all(|m| m.losses.is_finite()));
    }

    #[test]
    fn graph_cached_unless_refreshed() {
        let d = blobs(60, 8);
        let cfg = small_config();
        let mut s = TrainState::new(&d, &cfg);
        build_epoch_context(&d, &mut s, &cfg).unwrap();
        let g0 = s.graph.clone().unwrap();
        train_epoch(&d, &mut s, &cfg).unwrap();
        assert_eq!(s.graph.as_ref().unwrap(), &g0);
    }

    #[test]
    fn ablation_never_touches_le_models() {
        let d = blobs(300, 9);
        let cfg = TrainConfig {
            total_epochs: 15,
            ..small_config()
        };
        let out = ablate_no_le(&d, Some(&d), &cfg).unwrap();
        assert_eq!(out.state.bundle.inference.params().step_count(), 0);
        assert_eq!(out.history().len(), 15);
        assert!(out.final_test_acc.unwrap() > 0.97, "{:?}", out.final_test_acc);
    }
}
