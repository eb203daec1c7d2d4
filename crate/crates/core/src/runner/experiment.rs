//! Runs every configured strategy on shared data and writes the artifacts.
//!
//! For each strategy `<s>` the output directory receives:
//!
//! * `metrics_<s>.csv`: `round,test_accuracy,test_loss,mean_client_train_loss,substituted_count,wall_time_s,client_time_s`
//! * `confusion_<s>.csv`: `actual,pred_0,…,pred_{K−1}`, one row per true class
//! * `run_<s>.toml`: `code_version`, `strategy`, `seed`, a `[totals]` table and
//!   the resolved `[config]`
//!
//! Strategies share the partition, the initial parameters and the client
//! sampling sequence, since all three are derived from the master seed only.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{DatasetKind, ExperimentConfig};
use crate::dataio::{self, DataError, Dataset, Split};
use crate::fedcore::{Evaluation, FedError, Federation, RoundReport, Strategy};
use crate::qsim::CircuitLayout;
use crate::seed::{derive_seed, Purpose};
use crate::vqc::{Classifier, Task, VqcError};

pub const METRICS_HEADER: [&str; 7] = [
    "round",
    "test_accuracy",
    "test_loss",
    "mean_client_train_loss",
    "substituted_count",
    "wall_time_s",
    "client_time_s",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Vqc(#[from] VqcError),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, RunError>;

/// Outcome of one strategy run.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub reports: Vec<RoundReport>,
    pub final_evaluation: Evaluation,
    pub local_mean_accuracy: Option<f64>,
    pub total_wall_time_s: f64,
    pub metrics_path: PathBuf,
    pub confusion_path: PathBuf,
    pub metadata_path: PathBuf,
}

impl StrategyRun {
    pub fn final_report(&self) -> &RoundReport {
        self.reports.last().expect("at least one round")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub train_samples: usize,
    pub test_samples: usize,
    pub runs: Vec<StrategyRun>,
}

impl ExperimentSummary {
    pub fn run(&self, strategy: Strategy) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.strategy == strategy)
    }
}

/// Loads and prepares the train and test sets described by `config`.
pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match config.dataset {
        DatasetKind::Mnist => {
            let path = |p: &Option<PathBuf>| p.clone().expect("validated path");
            let mut train = dataio::load_mnist_idx(
                &path(&config.train_images),
                &path(&config.train_labels),
                Split::Train,
            )?;
            let mut test = dataio::load_mnist_idx(
                &path(&config.test_images),
                &path(&config.test_labels),
                Split::Test,
            )?;
            if config.classes != (0..10).collect::<Vec<_>>() {
                train = train.filter_classes(&config.classes);
                test = test.filter_classes(&config.classes);
            }
            if config.downsample > 0 {
                train = dataio::downsample_square(&train, config.downsample)?;
                test = dataio::downsample_square(&test, config.downsample)?;
            }
            (train, test)
        }
        DatasetKind::Csv => {
            let path = |p: &Option<PathBuf>| p.clone().expect("validated path");
            (
                dataio::load_feature_csv(
                    &path(&config.train_csv),
                    config.feature_dim,
                    config.n_classes,
                    Split::Train,
                )?,
                dataio::load_feature_csv(
                    &path(&config.test_csv),
                    config.feature_dim,
                    config.n_classes,
                    Split::Test,
                )?,
            )
        }
        DatasetKind::Synthetic => {
            // one draw so both splits share the class means; split by index
            let total = config.synthetic_train + config.synthetic_test;
            let all = dataio::synthesize_binary(
                total,
                config.feature_dim,
                config.class_separation,
                derive_seed(config.seed, 0, 0, Purpose::SyntheticTrain),
                Split::Train,
            )?;
            let train_idx: Vec<usize> = (0..config.synthetic_train).collect();
            let test_idx: Vec<usize> = (config.synthetic_train..total).collect();
            let mut test = all.subset(&test_idx);
            test.split = Split::Test;
            (all.subset(&train_idx), test)
        }
    };
    if train.dim() > config.target_dim {
        return Err(RunError::Invalid(format!(
            "features have {} dimensions but the register holds {}",
            train.dim(),
            config.target_dim
        )));
    }
    let train = dataio::prepare_for_encoding(&train, config.target_dim)?;
    let mut test = dataio::prepare_for_encoding(&test, config.target_dim)?;
    if config.max_test_samples > 0 && config.max_test_samples < test.len() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, 0, Purpose::TestSubset));
        let mut keep = index::sample(&mut rng, test.len(), config.max_test_samples).into_vec();
        keep.sort_unstable();
        test = test.subset(&keep);
    }
    Ok((train, test))
}

pub fn classifier_for(config: &ExperimentConfig) -> Result<Classifier> {
    Ok(Classifier::new(
        CircuitLayout::new(config.n_qubits, config.n_layers),
        Task::for_classes(config.n_classes),
    )?)
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::Write {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

pub fn metrics_row(r: &RoundReport) -> [String; 7] {
    [
        r.round.to_string(),
        r.test_accuracy.to_string(),
        r.test_loss.to_string(),
        r.mean_client_train_loss.to_string(),
        r.substituted_count.to_string(),
        format!("{:.6}", r.wall_time_s),
        format!("{:.6}", r.client_time_s),
    ]
}

fn write_confusion(path: &Path, confusion: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["actual".to_string()];
    header.extend((0..confusion.len()).map(|k| format!("pred_{k}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for (actual, row) in confusion.iter().enumerate() {
        let mut rec = vec![actual.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

#[derive(Serialize)]
struct Totals {
    rounds: usize,
    train_samples: usize,
    test_samples: usize,
    final_test_accuracy: f64,
    final_test_loss: f64,
    best_test_accuracy: f64,
    total_substituted: usize,
    total_wall_time_s: f64,
    total_client_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    local_mean_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    code_version: &'static str,
    strategy: Strategy,
    seed: u64,
    totals: Totals,
    config: &'a ExperimentConfig,
}

/// Runs a single strategy, streaming its metrics CSV as rounds finish.
pub fn run_strategy(
    config: &ExperimentConfig,
    strategy: Strategy,
    train: &Dataset,
    test: &Dataset,
    mut progress: impl FnMut(Strategy, &RoundReport),
) -> Result<StrategyRun> {
    let clock = Instant::now();
    let classifier = classifier_for(config)?;
    let mut federation = Federation::new(
        classifier,
        config.round_config(strategy),
        train.clone(),
        test.clone(),
    )?;

    let out = &config.out_dir;
    let metrics_path = out.join(format!("metrics_{strategy}.csv"));
    let mut metrics = csv::Writer::from_path(&metrics_path).map_err(csv_err(&metrics_path))?;
    metrics
        .write_record(METRICS_HEADER)
        .map_err(csv_err(&metrics_path))?;
    let mut reports = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let report = federation.run_round()?;
        metrics
            .write_record(metrics_row(&report))
            .map_err(csv_err(&metrics_path))?;
        metrics.flush().map_err(write_err(&metrics_path))?;
        progress(strategy, &report);
        reports.push(report);
    }
    drop(metrics);

    let final_evaluation = federation
        .last_evaluation()
        .cloned()
        .expect("at least one round ran");
    let confusion_path = out.join(format!("confusion_{strategy}.csv"));
    write_confusion(&confusion_path, &final_evaluation.confusion)?;

    let local_mean_accuracy = federation.local_mean_accuracy()?;
    let total_wall_time_s = if config.timing {
        clock.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let metadata_path = out.join(format!("run_{strategy}.toml"));
    let meta = Metadata {
        code_version: env!("CARGO_PKG_VERSION"),
        strategy,
        seed: config.seed,
        totals: Totals {
            rounds: reports.len(),
            train_samples: train.len(),
            test_samples: test.len(),
            final_test_accuracy: final_evaluation.accuracy,
            final_test_loss: final_evaluation.mean_loss,
            best_test_accuracy: reports
                .iter()
                .map(|r| r.test_accuracy)
                .fold(f64::NEG_INFINITY, f64::max),
            total_substituted: reports.iter().map(|r| r.substituted_count).sum(),
            total_wall_time_s,
            total_client_time_s: reports.iter().map(|r| r.client_time_s).sum(),
            local_mean_accuracy,
        },
        config,
    };
    let text = toml::to_string(&meta).map_err(|e| RunError::Invalid(e.to_string()))?;
    File::create(&metadata_path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(write_err(&metadata_path))?;

    Ok(StrategyRun {
        strategy,
        reports,
        final_evaluation,
        local_mean_accuracy,
        total_wall_time_s,
        metrics_path,
        confusion_path,
        metadata_path,
    })
}

/// Loads data once, then runs each configured strategy in turn.
pub fn run_experiment(
    config: &ExperimentConfig,
    mut progress: impl FnMut(Strategy, &RoundReport),
) -> Result<ExperimentSummary> {
    fs::create_dir_all(&config.out_dir).map_err(write_err(&config.out_dir))?;
    let (train, test) = load_datasets(config)?;
    let mut runs = Vec::with_capacity(config.strategies.len());
    for &strategy in &config.strategies {
        runs.push(run_strategy(config, strategy, &train, &test, &mut progress)?);
    }
    Ok(ExperimentSummary {
        train_samples: train.len(),
        test_samples: test.len(),
        runs,
    })
}
