//! Experiment configuration: presets, TOML config files and overrides.
//!
//! Resolution order, lowest to highest precedence: built-in defaults (the
//! `mnist-paper` preset), the selected preset, the config file, `--set`
//! overrides, then dedicated command-line flags. The output directory falls
//! back to `$QFEDFISHER_OUT` when neither the file nor a flag sets it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fedcore::{RoundConfig, Strategy};
use crate::vqc::FisherMode;

pub const OUT_DIR_ENV: &str = "QFEDFISHER_OUT";
pub const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("unknown preset {0:?} (expected mnist-paper, mnist-small, binary, binary-small)")]
    UnknownPreset(String),
    #[error("invalid override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("dataset {dataset} needs `{key}`")]
    MissingPath { dataset: DatasetKind, key: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Csv,
    Synthetic,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Csv => "csv",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherModeKey {
    PerSample,
    PerBatch,
}

/// Every key a config file may contain. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub dataset: Option<DatasetKind>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub feature_dim: Option<usize>,
    pub n_classes: Option<usize>,
    pub classes: Option<Vec<usize>>,
    pub downsample: Option<usize>,
    pub synthetic_train: Option<usize>,
    pub synthetic_test: Option<usize>,
    pub class_separation: Option<f64>,
    pub max_test_samples: Option<usize>,
    pub target_dim: Option<usize>,
    pub n_qubits: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_clients: Option<usize>,
    pub participation: Option<f64>,
    pub local_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub local_lr: Option<f64>,
    pub server_lr: Option<f64>,
    pub fisher_threshold: Option<f64>,
    pub dirichlet_alpha: Option<f64>,
    pub samples_per_client: Option<usize>,
    pub client_retention: Option<bool>,
    pub fisher_mode: Option<FisherModeKey>,
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub strategies: Option<Vec<Strategy>>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub timing: Option<bool>,
}

/// Command-line values that beat everything else.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub preset: Option<String>,
    pub strategies: Option<Vec<Strategy>>,
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Raw `key=value` pairs, values in TOML syntax (bare strings allowed).
    pub set: Vec<String>,
}

/// Fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub dataset: DatasetKind,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub classes: Vec<usize>,
    pub downsample: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub class_separation: f64,
    pub max_test_samples: usize,
    pub target_dim: usize,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub n_clients: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub server_lr: f64,
    pub fisher_threshold: f64,
    pub dirichlet_alpha: f64,
    pub samples_per_client: usize,
    pub client_retention: bool,
    pub fisher_mode: FisherModeKey,
    pub rounds: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn round_config(&self, strategy: Strategy) -> RoundConfig {
        RoundConfig {
            n_clients: self.n_clients,
            participation: self.participation,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            local_lr: self.local_lr,
            server_lr: self.server_lr,
            fisher_threshold: self.fisher_threshold,
            dirichlet_alpha: self.dirichlet_alpha,
            samples_per_client: self.samples_per_client,
            strategy,
            client_retention: self.client_retention,
            fisher_mode: match self.fisher_mode {
                FisherModeKey::PerSample => FisherMode::PerSample,
                FisherModeKey::PerBatch => FisherMode::PerBatch(self.batch_size),
            },
            rounds: self.rounds,
            seed: self.seed,
            threads: self.threads,
            timing: self.timing,
        }
    }

    /// Render as a TOML document that `parse_config` accepts back.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }
}

fn mnist_paths(cfg: &mut ConfigFile) {
    let dir = Path::new("data/mnist");
    cfg.train_images = Some(dir.join("train-images-idx3-ubyte.gz"));
    cfg.train_labels = Some(dir.join("train-labels-idx1-ubyte.gz"));
    cfg.test_images = Some(dir.join("t10k-images-idx3-ubyte.gz"));
    cfg.test_labels = Some(dir.join("t10k-labels-idx1-ubyte.gz"));
}

/// Base values of a named preset, as if written in a config file.
pub fn preset(name: &str) -> Result<ConfigFile, ConfigError> {
    // shared protocol: E = 1, B = 32, Adam lr 1e-3, δ = 0.01, 500 samples/client
    let mut cfg = ConfigFile {
        preset: Some(name.to_string()),
        local_epochs: Some(1),
        batch_size: Some(32),
        local_lr: Some(1e-3),
        server_lr: Some(1e-2),
        fisher_threshold: Some(0.01),
        samples_per_client: Some(500),
        client_retention: Some(true),
        fisher_mode: Some(FisherModeKey::PerSample),
        seed: Some(0),
        strategies: Some(Strategy::ALL.to_vec()),
        threads: Some(0),
        timing: Some(true),
        max_test_samples: Some(0),
        downsample: Some(0),
        ..Default::default()
    };
    match name {
        "mnist" | "mnist-paper" => {
            cfg.preset = Some("mnist-paper".into());
            cfg.dataset = Some(DatasetKind::Mnist);
            mnist_paths(&mut cfg);
            cfg.classes = Some((0..10).collect());
            cfg.n_qubits = Some(10);
            cfg.n_layers = Some(60);
            cfg.n_clients = Some(100);
            cfg.participation = Some(0.05);
            cfg.dirichlet_alpha = Some(0.5);
            cfg.rounds = Some(300);
        }
        "mnist-small" => {
            cfg.dataset = Some(DatasetKind::Mnist);
            mnist_paths(&mut cfg);
            cfg.classes = Some(vec![0, 1, 2, 3]);
            cfg.downsample = Some(8);
            cfg.n_qubits = Some(6);
            cfg.n_layers = Some(20);
            cfg.n_clients = Some(20);
            cfg.samples_per_client = Some(200);
            cfg.participation = Some(0.25);
            cfg.dirichlet_alpha = Some(0.5);
            cfg.rounds = Some(40);
            // at 25% participation a returning client's own parameters can be
            // many rounds old, and keeping them drags the global model back
            cfg.client_retention = Some(false);
        }
        "binary" => {
            cfg.dataset = Some(DatasetKind::Synthetic);
            cfg.n_classes = Some(2);
            cfg.n_qubits = Some(11);
            cfg.n_layers = Some(60);
            cfg.n_clients = Some(10);
            cfg.participation = Some(1.0);
            cfg.dirichlet_alpha = Some(0.1);
            cfg.rounds = Some(100);
            cfg.synthetic_train = Some(6000);
            cfg.synthetic_test = Some(1000);
            cfg.class_separation = Some(10.0);
        }
        "binary-small" => {
            cfg.dataset = Some(DatasetKind::Synthetic);
            cfg.n_classes = Some(2);
            cfg.n_qubits = Some(4);
            cfg.n_layers = Some(BINARY_SMALL_LAYERS);
            cfg.n_clients = Some(10);
            cfg.participation = Some(1.0);
            cfg.dirichlet_alpha = Some(0.1);
            cfg.rounds = Some(20);
            cfg.synthetic_train = Some(6000);
            cfg.synthetic_test = Some(1000);
            cfg.class_separation = Some(10.0);
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    }
    Ok(cfg)
}

const BINARY_SMALL_LAYERS: usize = 4;

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

fn overlay(base: &mut ConfigFile, top: &ConfigFile) {
    overlay!(
        base, top, preset, dataset, train_images, train_labels, test_images, test_labels,
        train_csv, test_csv, feature_dim, n_classes, classes, downsample, synthetic_train,
        synthetic_test, class_separation, max_test_samples, target_dim, n_qubits, n_layers,
        n_clients, participation, local_epochs, batch_size, local_lr, server_lr,
        fisher_threshold, dirichlet_alpha, samples_per_client, client_retention, fisher_mode,
        rounds, seed, strategies, out_dir, threads, timing,
    );
}

fn parse_table(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>()
        .map_err(|e| ConfigError::Parse(e.to_string()))
}

fn apply_set(table: &mut toml::Table, entry: &str) -> Result<(), ConfigError> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(entry.to_string()))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = match parse_table(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    table.insert(key.to_string(), value);
    Ok(())
}

/// Parses config text (TOML, flat keys) and applies overrides.
pub fn parse_config_str(
    text: &str,
    flags: &FlagOverrides,
    env_out_dir: Option<PathBuf>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut table = parse_table(text)?;
    for entry in &flags.set {
        apply_set(&mut table, entry)?;
    }
    let file: ConfigFile = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;

    let preset_name = flags
        .preset
        .clone()
        .or_else(|| file.preset.clone())
        .unwrap_or_else(|| "mnist-paper".to_string());
    let mut merged = preset(&preset_name)?;
    let mut file = file;
    file.preset = None;
    overlay(&mut merged, &file);
    let top = ConfigFile {
        strategies: flags.strategies.clone(),
        rounds: flags.rounds,
        seed: flags.seed,
        out_dir: flags.out_dir.clone(),
        threads: flags.threads,
        ..Default::default()
    };
    overlay(&mut merged, &top);
    if merged.out_dir.is_none() {
        merged.out_dir = env_out_dir;
    }
    resolve(merged)
}

/// Reads a config file (or an empty one when `path` is `None`) and resolves it.
pub fn parse_config(path: Option<&Path>, flags: &FlagOverrides) -> Result<ExperimentConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    parse_config_str(&text, flags, env_out)
}

fn resolve(c: ConfigFile) -> Result<ExperimentConfig, ConfigError> {
    let invalid = |m: String| Err(ConfigError::Invalid(m));
    let dataset = c.dataset.unwrap_or(DatasetKind::Mnist);
    let n_qubits = c.n_qubits.unwrap_or(10);
    if n_qubits == 0 || n_qubits > 24 {
        return invalid(format!("n_qubits {n_qubits} outside 1..=24"));
    }
    let full_dim = 1usize << n_qubits;
    let target_dim = c.target_dim.unwrap_or(full_dim);
    if target_dim != full_dim {
        return invalid(format!(
            "target_dim {target_dim} does not match n_qubits {n_qubits} (2^{n_qubits} = {full_dim})"
        ));
    }
    let classes = c.classes.unwrap_or_else(|| (0..10).collect());
    let n_classes = match dataset {
        DatasetKind::Mnist => classes.len(),
        _ => c.n_classes.unwrap_or(2),
    };
    if n_classes < 2 {
        return invalid(format!("need at least two classes, got {n_classes}"));
    }
    if n_classes > 2 && n_classes > n_qubits {
        return invalid(format!(
            "{n_classes} classes need {n_classes} readout qubits but n_qubits is {n_qubits}"
        ));
    }
    if dataset == DatasetKind::Mnist {
        if let Some(&bad) = classes.iter().find(|&&k| k > 9) {
            return invalid(format!("MNIST class {bad} outside 0..=9"));
        }
        for (key, value) in [
            ("train_images", &c.train_images),
            ("train_labels", &c.train_labels),
            ("test_images", &c.test_images),
            ("test_labels", &c.test_labels),
        ] {
            if value.is_none() {
                return Err(ConfigError::MissingPath { dataset, key });
            }
        }
    }
    if dataset == DatasetKind::Csv {
        if c.train_csv.is_none() {
            return Err(ConfigError::MissingPath {
                dataset,
                key: "train_csv",
            });
        }
        if c.test_csv.is_none() {
            return Err(ConfigError::MissingPath {
                dataset,
                key: "test_csv",
            });
        }
    }
    let feature_dim = c.feature_dim.unwrap_or(target_dim);
    if dataset != DatasetKind::Mnist && feature_dim > target_dim {
        return invalid(format!(
            "feature_dim {feature_dim} exceeds target_dim {target_dim}"
        ));
    }
    if dataset == DatasetKind::Synthetic && !feature_dim.is_power_of_two() {
        return invalid(format!("synthetic feature_dim {feature_dim} must be a power of two"));
    }
    let strategies = c.strategies.unwrap_or_else(|| Strategy::ALL.to_vec());
    if strategies.is_empty() {
        return invalid("no strategies selected".into());
    }
    let n_layers = c.n_layers.unwrap_or(60);
    if n_layers == 0 {
        return invalid("n_layers must be at least 1".into());
    }
    let rounds = c.rounds.unwrap_or(300);
    if rounds == 0 {
        return invalid("rounds must be at least 1".into());
    }

    let cfg = ExperimentConfig {
        preset: c.preset.unwrap_or_default(),
        dataset,
        train_images: c.train_images,
        train_labels: c.train_labels,
        test_images: c.test_images,
        test_labels: c.test_labels,
        train_csv: c.train_csv,
        test_csv: c.test_csv,
        feature_dim,
        n_classes,
        classes,
        downsample: c.downsample.unwrap_or(0),
        synthetic_train: c.synthetic_train.unwrap_or(6000),
        synthetic_test: c.synthetic_test.unwrap_or(1000),
        class_separation: c.class_separation.unwrap_or(10.0),
        max_test_samples: c.max_test_samples.unwrap_or(0),
        target_dim,
        n_qubits,
        n_layers,
        n_clients: c.n_clients.unwrap_or(100),
        participation: c.participation.unwrap_or(0.05),
        local_epochs: c.local_epochs.unwrap_or(1),
        batch_size: c.batch_size.unwrap_or(32),
        local_lr: c.local_lr.unwrap_or(1e-3),
        server_lr: c.server_lr.unwrap_or(1e-2),
        fisher_threshold: c.fisher_threshold.unwrap_or(0.01),
        dirichlet_alpha: c.dirichlet_alpha.unwrap_or(0.5),
        samples_per_client: c.samples_per_client.unwrap_or(500),
        client_retention: c.client_retention.unwrap_or(true),
        fisher_mode: c.fisher_mode.unwrap_or(FisherModeKey::PerSample),
        rounds,
        seed: c.seed.unwrap_or(0),
        strategies,
        out_dir: c.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        threads: c.threads.unwrap_or(0),
        timing: c.timing.unwrap_or(true),
    };
    cfg.round_config(Strategy::FedAvg)
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}
