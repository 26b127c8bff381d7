use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pll_core::data::{
    load_csv, read_csv, write_csv, CleanModelSpec, CorruptionConfig, CorruptionMode, CsvSchema, PllDataset, SplitTag,
    Standardizer,
};
use pll_core::models::{Architecture, InferenceModel, ModelBundle, ObservationModel, PredictiveModel};
use pll_core::numeric::RngState;
use pll_core::trainer::{self, cross_validate, write_run, TrainConfig, TrainState};
use pll_core::verify::{self, Suite, VerifyOptions};
use pll_core::{PllError, Result};

#[derive(Parser)]
#[command(name = "pll", version, about = "Partial-label learning with variational label enhancement")]
struct Cli {
    /// Root for run directories when --out is not given.
    #[arg(long, env = "PLL_OUTPUT_ROOT", default_value = "runs", global = true)]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a clean CSV into a partially labelled one.
    Corrupt(CorruptArgs),
    /// Train, optionally with cross-validation or without label enhancement.
    Train(TrainArgs),
    /// Accuracy of a saved checkpoint on a labelled CSV.
    Eval(EvalArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Uniform,
    InstanceDependent,
}

#[derive(Args)]
struct CorruptArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    mode: ModeArg,
    /// Flip probability for uniform mode.
    #[arg(long, default_value_t = 0.5)]
    xi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// z-score features before training the clean model and writing.
    #[arg(long)]
    standardize: bool,
    /// Epochs for the clean model of instance-dependent mode.
    #[arg(long, default_value_t = CleanModelSpec::default().epochs)]
    clean_epochs: usize,
    /// Report path; defaults to OUTPUT with a .report.json suffix.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Clean model cache; defaults to OUTPUT with a .clean suffix.
    #[arg(long)]
    clean_model_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV.
    #[arg(long)]
    train: PathBuf,
    /// Labelled test CSV.
    #[arg(long)]
    test: Option<PathBuf>,
    /// TOML training configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; defaults to OUTPUT_ROOT/<train stem>-seed<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// z-score features with training-set statistics.
    #[arg(long)]
    standardize: bool,
    /// Train with the weighted minimal loss only.
    #[arg(long)]
    ablate_no_le: bool,
    /// K-fold cross-validation on the training CSV instead of a single run.
    #[arg(long)]
    cv: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Learning rate of all three models.
    #[arg(long)]
    lr: Option<f64>,
    /// Weight decay of all three models.
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Hidden widths of an MLP predictive model, e.g. 300,300.
    #[arg(long, value_delimiter = ',')]
    mlp: Option<Vec<usize>>,
    /// Print one line per epoch.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory holding models.bin and models.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labelled CSV to score.
    #[arg(long)]
    data: PathBuf,
    /// Training CSV whose statistics standardize `data`.
    #[arg(long)]
    standardize_with: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only these suites: kl, implicit-grad, losses, graph.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = VerifyOptions::default().cases)]
    cases: usize,
    #[arg(long, default_value_t = VerifyOptions::default().kl_samples)]
    kl_samples: usize,
    /// Corrupt the analytic side of one suite so that its check must fail.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::Train(a) => cmd_train(a, &cli.output_root),
        Command::Eval(a) => cmd_eval(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn standardized(d: PllDataset, stats: &Standardizer) -> Result<PllDataset> {
    let x = stats.apply(d.features())?;
    d.with_features(x)
}

fn load(path: &Path, split: SplitTag, classes: Option<usize>) -> Result<PllDataset> {
    load_csv(
        path,
        &CsvSchema {
            standardize: false,
            class_count: classes,
            split,
        },
    )
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct CleanModelKey {
    spec: CleanModelSpec,
    seed: u64,
    inputs: usize,
    classes: usize,
}

/// Loads the cached clean model when its key matches, otherwise trains and caches one.
fn cached_clean_model(cfg: &CorruptionConfig, clean: &PllDataset, dir: &Path) -> Result<PredictiveModel> {
    let key = CleanModelKey {
        spec: cfg.clean_model.clone(),
        seed: cfg.seed,
        inputs: clean.num_features(),
        classes: clean.num_classes(),
    };
    let key_path = dir.join("clean_model.json");
    if let Ok(text) = std::fs::read_to_string(&key_path) {
        if serde_json::from_str::<CleanModelKey>(&text).ok().as_ref() == Some(&key) {
            return Ok(ModelBundle::load(dir)?.0.predictive);
        }
    }
    let model = cfg.clean_model(clean)?;
    std::fs::create_dir_all(dir).map_err(|e| PllError::io(dir, e))?;
    let bundle = ModelBundle {
        inference: InferenceModel::new(model.feature_dim(), model.classes(), 1, &mut RngState::new(0)),
        observation: ObservationModel::zeroed(model.classes(), (1, 1)),
        predictive: model,
    };
    bundle.save(dir, cfg.seed)?;
    pll_core::models::write_atomic(&key_path, serde_json::to_string_pretty(&key)?.as_bytes())?;
    Ok(bundle.predictive)
}

fn cmd_corrupt(a: CorruptArgs) -> Result<ExitCode> {
    let cfg = CorruptionConfig {
        mode: match a.mode {
            ModeArg::Uniform => CorruptionMode::Uniform,
            ModeArg::InstanceDependent => CorruptionMode::InstanceDependent,
        },
        xi_uniform: a.xi,
        clean_model: CleanModelSpec {
            epochs: a.clean_epochs,
            ..CleanModelSpec::default()
        },
        seed: a.seed,
    };
    cfg.validate()?;
    let clean = load_csv(
        &a.input,
        &CsvSchema {
            standardize: a.standardize,
            ..CsvSchema::default()
        },
    )?;
    let model = match cfg.mode {
        CorruptionMode::Uniform => None,
        CorruptionMode::InstanceDependent => {
            let dir = a.clean_model_dir.unwrap_or_else(|| with_suffix(&a.output, ".clean"));
            Some(cached_clean_model(&cfg, &clean, &dir)?)
        }
    };
    let (noisy, report) = cfg.apply_with(&clean, model.as_ref())?;
    write_csv(&noisy, &a.output)?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.output, ".report.json"));
    report.write_json(&report_path)?;
    println!(
        "wrote {} ({} rows, average candidates {:.4}, true-label coverage {:.4})",
        a.output.display(),
        noisy.len(),
        report.avg_candidates,
        report.true_label_coverage
    );
    Ok(ExitCode::SUCCESS)
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PllError::io(p, e))?;
            toml::from_str(&text).map_err(|e| PllError::Config(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(seed => seed, epochs => total_epochs, warmup => warmup_epochs, batch_size => batch_size,
         lambda => lambda, epsilon => epsilon, k => k, mc_samples => mc_samples);
    if let Some(lr) = a.lr {
        cfg.predictive.lr = lr;
        cfg.inference.lr = lr;
        cfg.observation.lr = lr;
    }
    if let Some(wd) = a.weight_decay {
        cfg.predictive.weight_decay = wd;
        cfg.inference.weight_decay = wd;
        cfg.observation.weight_decay = wd;
    }
    if let Some(hidden) = &a.mlp {
        cfg.architecture = Architecture::Mlp { hidden: hidden.clone() };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs, output_root: &Path) -> Result<ExitCode> {
    let cfg = train_config(&a)?;
    let mut train = load(&a.train, SplitTag::Train, None)?;
    let mut test = a
        .test
        .as_ref()
        .map(|p| load(p, SplitTag::Test, Some(train.num_classes())))
        .transpose()?;
    if let Some(t) = &test {
        if t.num_features() != train.num_features() {
            return Err(PllError::shape("train --test", train.num_features(), t.num_features()));
        }
        if t.true_labels().is_none() {
            return Err(PllError::Validation("the test CSV needs true labels".into()));
        }
    }
    if a.standardize {
        let stats = Standardizer::fit(train.features());
        train = standardized(train, &stats)?;
        test = test.map(|t| standardized(t, &stats)).transpose()?;
    }
    let stem = a.train.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| output_root.join(format!("{stem}-seed{}", cfg.seed)));
    std::fs::create_dir_all(&out).map_err(|e| PllError::io(&out, e))?;

    if let Some(folds) = a.cv {
        let report = cross_validate(&train, &cfg, folds, a.ablate_no_le)?;
        pll_core::models::write_atomic(&out.join("cv.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
        for (i, acc) in report.fold_accuracies.iter().enumerate() {
            println!("fold {i}: {acc:.4}");
        }
        println!("cv accuracy {:.4} ± {:.4}", report.mean, report.std);
        return Ok(ExitCode::SUCCESS);
    }

    let mut state = TrainState::new(&train, &cfg);
    let verbose = a.verbose;
    let mut observer = |m: &trainer::EpochMetrics| {
        if verbose {
            println!(
                "epoch {:>4} {:?} loss {:.5}{}",
                m.epoch,
                m.phase,
                m.losses.total,
                m.test_acc.map_or(String::new(), |v| format!(" test_acc {v:.4}"))
            );
        }
    };
    let result = if a.ablate_no_le {
        trainer::run_ablation(&train, test.as_ref(), &cfg, &mut state, &mut observer)
    } else {
        trainer::run(&train, test.as_ref(), &cfg, &mut state, &mut observer)
    };
    // the state keeps the last good parameters even when a step failed
    write_run(&out, &cfg, &state, a.ablate_no_le)?;
    let acc = result?;
    match acc {
        Some(v) => println!("final test accuracy {v:.4}"),
        None => println!("trained {} epochs", state.epoch),
    }
    println!("run directory {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let (bundle, manifest) = ModelBundle::load(&a.checkpoint)?;
    let mut data = load(&a.data, SplitTag::Test, Some(manifest.classes))?;
    if data.num_features() != manifest.inputs {
        return Err(PllError::shape("eval", manifest.inputs, data.num_features()));
    }
    if let Some(p) = &a.standardize_with {
        let reference = read_csv(
            std::fs::File::open(p).map_err(|e| PllError::io(p, e))?,
            &CsvSchema::default(),
        )?;
        data = standardized(data, &Standardizer::fit(reference.features()))?;
    }
    let acc = trainer::evaluate(&bundle.predictive, &data)?;
    println!("accuracy {acc:.4}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let suites: Vec<Suite> = if a.only.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.only.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    let fault = a.inject_fault.as_deref().map(str::parse).transpose()?;
    if a.cases == 0 || a.kl_samples < 2 {
        return Err(PllError::Config("need cases >= 1 and kl-samples >= 2".into()));
    }
    let opts = VerifyOptions {
        seed: a.seed,
        cases: a.cases,
        kl_samples: a.kl_samples,
        fault,
    };
    let results = verify::run(&suites, &opts)?;
    for r in &results {
        println!(
            "{} {:<14} {:<48} achieved {:.3e} tolerance {:.1e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite.name(),
            r.name,
            r.achieved,
            r.tolerance
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
