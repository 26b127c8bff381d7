use std::time::Instant;

use pll_core::data::synthetic::BlobSpec;
use pll_core::data::{corrupt_uniform, CorruptionConfig, CorruptionMode, PllDataset, SplitTag};
use pll_core::dirichlet::{dirichlet_mean, DirichletParams};
use pll_core::graph::build_knn_graph;
use pll_core::models::{Architecture, PredictiveModel};
use pll_core::numeric::{Matrix, RngState};
use pll_core::objectives::{candidate_confidence, risk_estimator, risk_weights, weighted_min_loss};
use pll_core::trainer::{
    ablate_no_le, build_epoch_context, evaluate, fit, train_epoch, warmup, GraphRefresh, OptimSettings, TrainConfig,
    TrainState,
};

fn noisy_blobs(n: usize, seed: u64) -> PllDataset {
    let clean = BlobSpec::separable().sample(n, SplitTag::Train, &mut RngState::new(seed)).unwrap();
    corrupt_uniform(&clean, 0.4, &mut RngState::new(seed + 100)).unwrap().0
}

fn small() -> TrainConfig {
    TrainConfig {
        warmup_epochs: 2,
        total_epochs: 6,
        batch_size: 32,
        gcn_hidden: 16,
        observation_hidden: (16, 16),
        ..TrainConfig::default()
    }
}

fn brute_force_in_neighbourhoods(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = x.rows();
    (0..n)
        .map(|j| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&i| i != j)
                .map(|i| (x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum(), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut v: Vec<usize> = d.into_iter().take(k).map(|(_, i)| i).collect();
            v.push(j);
            v.sort_unstable();
            v
        })
        .collect()
}

#[test]
fn posterior_proportional_to_candidates_matches_min_loss_targets() {
    let mut rng = RngState::new(3);
    let data = noisy_blobs(20, 3);
    let model = PredictiveModel::new(Architecture::Linear, 2, 3, &mut rng);
    let preds = model.predict(data.features()).unwrap();
    let zeta = candidate_confidence(&preds, data.candidates()).unwrap();
    // α concentrated on the candidate set in proportion to the predictor's confidence
    let alphas = zeta.map(|z| 1e-4 + 50.0 * z);
    let d = dirichlet_mean(&DirichletParams::new(alphas).unwrap());
    let w = risk_weights(data.candidates(), &d).unwrap();
    assert_eq!(w.argmax_rows(), zeta.argmax_rows());
    let risk = risk_estimator(&preds, data.candidates(), &d).unwrap();
    let min_loss = weighted_min_loss(&preds, data.candidates()).unwrap();
    assert!((risk - min_loss).abs() < 1e-4 * min_loss, "{risk} vs {min_loss}");
}

#[test]
fn zero_lambda_epoch_runs_on_twenty_examples() {
    let data = noisy_blobs(20, 4);
    let cfg = TrainConfig {
        lambda: 0.0,
        k: 3,
        batch_size: 20,
        ..small()
    };
    let out = fit(&data, None, &cfg).unwrap();
    assert!(out.history().iter().all(|m| m.losses.is_finite()));
}

#[test]
fn per_epoch_refresh_with_frozen_predictor_keeps_graph() {
    let data = noisy_blobs(80, 5);
    let cfg = TrainConfig {
        predictive: OptimSettings { lr: 0.0, weight_decay: 0.0 },
        graph_refresh: GraphRefresh::PerEpoch,
        ..small()
    };
    let mut state = TrainState::new(&data, &cfg);
    warmup(&data, None, &cfg, &mut state).unwrap();
    build_epoch_context(&data, &mut state, &cfg).unwrap();
    let first = state.graph.clone().unwrap();
    for _ in 0..3 {
        train_epoch(&data, &mut state, &cfg).unwrap();
        build_epoch_context(&data, &mut state, &cfg).unwrap();
        assert_eq!(state.graph.as_ref().unwrap(), &first);
    }
}

#[test]
fn linear_features_are_raw_inputs_and_graph_matches_brute_force() {
    let data = noisy_blobs(40, 6);
    let cfg = small();
    let mut state = TrainState::new(&data, &cfg);
    warmup(&data, None, &cfg, &mut state).unwrap();
    build_epoch_context(&data, &mut state, &cfg).unwrap();
    assert_eq!(state.phi.as_ref().unwrap(), data.features());
    let a = state.graph.as_ref().unwrap().adjacency_dense();
    let expected = brute_force_in_neighbourhoods(data.features(), cfg.k);
    for (j, nb) in expected.iter().enumerate() {
        let got: Vec<usize> = (0..data.len()).filter(|&i| a[(i, j)] == 1.0).collect();
        assert_eq!(&got, nb, "column {j}");
    }
    assert_eq!(build_knn_graph(data.features(), cfg.k).unwrap().adjacency_dense(), a);
}

#[test]
fn fifty_epochs_stay_finite_on_blobs() {
    let spec = BlobSpec::ring(6, 4.0);
    let clean = spec.sample(400, SplitTag::Train, &mut RngState::new(7)).unwrap();
    let cc = CorruptionConfig {
        mode: CorruptionMode::InstanceDependent,
        seed: 7,
        ..CorruptionConfig::default()
    };
    let (noisy, _) = cc.apply(&clean).unwrap();
    let cfg = TrainConfig {
        total_epochs: 50,
        ..TrainConfig::default()
    };
    let out = fit(&noisy, Some(&clean), &cfg).unwrap();
    assert_eq!(out.history().len(), 50);
    assert!(out.history().iter().all(|m| m.losses.is_finite() && m.skipped_batches == 0));
    assert!(out.final_test_acc.unwrap() > 0.5);
}

#[test]
fn label_enhancement_lifts_posterior_quality() {
    let data = noisy_blobs(300, 8);
    let cfg = TrainConfig {
        total_epochs: 30,
        ..TrainConfig::default()
    };
    let out = fit(&data, None, &cfg).unwrap();
    let q: Vec<f64> = out.history().iter().filter_map(|m| m.le_quality).collect();
    assert!(q.last().unwrap() > &0.9, "{q:?}");
    let recon: Vec<f64> = out.history().iter().skip(cfg.warmup_epochs).map(|m| m.losses.recon_label).collect();
    assert!(recon.last().unwrap() > &recon[0], "{recon:?}");
}

#[test]
fn constant_predictor_scores_one_over_c() {
    for c in [2usize, 3, 5] {
        let labels: Vec<usize> = (0..600).map(|i| i % c).collect();
        let mut rng = RngState::new(c as u64);
        let x = Matrix::from_vec(600, 2, (0..1200).map(|_| rng.normal()).collect()).unwrap();
        let data = PllDataset::supervised(x, labels, c, SplitTag::Test).unwrap();
        let acc = evaluate(&PredictiveModel::zeroed(Architecture::Linear, 2, c), &data).unwrap();
        assert!((acc - 1.0 / c as f64).abs() < 1e-12, "c={c}: {acc}");
    }
}

#[test]
fn ablation_is_cheaper_than_full_training() {
    let data = noisy_blobs(400, 9);
    let cfg = TrainConfig {
        total_epochs: 20,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let full = fit(&data, None, &cfg).unwrap();
    let full_time = t.elapsed();
    let t = Instant::now();
    let abl = ablate_no_le(&data, None, &cfg).unwrap();
    let abl_time = t.elapsed();
    assert!(abl_time < full_time, "{abl_time:?} vs {full_time:?}");
    assert!(abl.ablation && !full.ablation);
    assert_eq!(abl.history().len(), full.history().len());
    let again = ablate_no_le(&data, None, &cfg).unwrap();
    assert_eq!(abl.history(), again.history());
}
