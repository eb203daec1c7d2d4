//! Federated training engine: partitioning, client updates, aggregation and
//! the communication-round loop.

mod aggregate;
mod optim;
mod partition;
mod train;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{
    aggregate_fedadam, aggregate_fedavg, aggregate_fedfisher, client_retention, size_weights,
    ClientUpdate, FISHER_FLOOR,
};
pub use optim::{Adam, BETA1, BETA2, EPSILON};
pub use partition::{
    clients_per_round, dirichlet_partition, largest_remainder, sample_clients, sample_dirichlet,
};
pub use train::{evaluate, kaiming_init, local_train, Evaluation, LocalOutcome, LocalTrainOptions};

use crate::dataio::Dataset;
use crate::seed::{derive_seed, Purpose};
use crate::vqc::{Classifier, FisherMode, FisherVector, ParameterVector, VqcError};

#[derive(Debug, Error)]
pub enum FedError {
    #[error(transparent)]
    Vqc(#[from] VqcError),
    #[error("aggregation needs at least one client update")]
    NoClients,
    #[error("vector length {got} does not match expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("client {0} sent no Fisher information")]
    MissingFisher(usize),
    #[error("partition needs {needed} samples but only {available} are available")]
    InsufficientData { needed: usize, available: usize },
    #[error("client partition is empty")]
    EmptyPartition,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, FedError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    FedAvg,
    FedAdam,
    FedFisher,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FedAvg, Strategy::FedAdam, Strategy::FedFisher];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedAdam => "fedadam",
            Strategy::FedFisher => "fedfisher",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fedavg" | "qfedavg" => Ok(Strategy::FedAvg),
            "fedadam" | "qfedadam" => Ok(Strategy::FedAdam),
            "fedfisher" | "qfedfisher" => Ok(Strategy::FedFisher),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// Federation hyper-parameters for one strategy run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub n_clients: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub server_lr: f64,
    pub fisher_threshold: f64,
    pub dirichlet_alpha: f64,
    pub samples_per_client: usize,
    pub strategy: Strategy,
    pub client_retention: bool,
    pub fisher_mode: FisherMode,
    pub rounds: usize,
    pub seed: u64,
    /// 1 runs everything on the calling thread; 0 uses all cores.
    pub threads: usize,
    /// Record wall-clock times; when off they are reported as zero.
    pub timing: bool,
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FedError::InvalidConfig(m));
        if self.n_clients == 0 {
            return bad("n_clients must be at least 1".into());
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return bad(format!("participation {} outside (0, 1]", self.participation));
        }
        if !(self.fisher_threshold >= 0.0) {
            return bad(format!("fisher_threshold {} is negative", self.fisher_threshold));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return bad(format!("dirichlet_alpha {} must be positive", self.dirichlet_alpha));
        }
        if self.samples_per_client == 0 || self.batch_size == 0 {
            return bad("samples_per_client and batch_size must be positive".into());
        }
        if !(self.local_lr > 0.0) || !(self.server_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }

    fn uses_retention(&self) -> bool {
        self.client_retention && self.strategy == Strategy::FedFisher
    }

    fn local_options(&self) -> LocalTrainOptions {
        LocalTrainOptions {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            lr: self.local_lr,
            fisher: (self.strategy == Strategy::FedFisher).then_some(self.fisher_mode),
        }
    }
}

/// Server state `θ_s` plus the persistent FedAdam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub params: ParameterVector,
    pub round: u64,
    pub adam: Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord {
    pub client_id: usize,
    pub partition: Vec<usize>,
    /// Parameters after this client's most recent local training.
    pub params: Option<ParameterVector>,
    /// Normalized Fisher from the same training run, if computed.
    pub fisher: Option<FisherVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u64,
    pub participants: Vec<usize>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub mean_client_train_loss: f64,
    pub substituted_count: usize,
    /// Whole round, including aggregation and evaluation.
    pub wall_time_s: f64,
    /// Sum over participants of local training plus Fisher time.
    pub client_time_s: f64,
}

/// One strategy's federation: data, clients, server model and thread pool.
pub struct Federation {
    classifier: Classifier,
    config: RoundConfig,
    train: Dataset,
    test: Dataset,
    clients: Vec<ClientRecord>,
    global: GlobalModel,
    pool: Option<rayon::ThreadPool>,
    last_evaluation: Option<Evaluation>,
}

impl Federation {
    /// Partitions `train` and initializes the global model, both from
    /// streams derived from `config.seed` (so they do not depend on the
    /// strategy).
    pub fn new(classifier: Classifier, config: RoundConfig, train: Dataset, test: Dataset) -> Result<Self> {
        config.validate()?;
        let partitions = dirichlet_partition(
            train.labels(),
            train.n_classes(),
            config.n_clients,
            config.dirichlet_alpha,
            config.samples_per_client,
            derive_seed(config.seed, 0, 0, Purpose::Partition),
        )?;
        let init = kaiming_init(&classifier.layout, derive_seed(config.seed, 0, 0, Purpose::Init));
        Self::with_partitions(classifier, config, train, test, partitions, init)
    }

    pub fn with_partitions(
        classifier: Classifier,
        config: RoundConfig,
        train: Dataset,
        test: Dataset,
        partitions: Vec<Vec<usize>>,
        init: ParameterVector,
    ) -> Result<Self> {
        config.validate()?;
        if partitions.len() != config.n_clients {
            return Err(FedError::InvalidConfig(format!(
                "{} partitions for {} clients",
                partitions.len(),
                config.n_clients
            )));
        }
        if init.len() != classifier.layout.n_params() {
            return Err(FedError::ShapeMismatch {
                expected: classifier.layout.n_params(),
                got: init.len(),
            });
        }
        let pool = match config.threads {
            1 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| FedError::ThreadPool(e.to_string()))?,
            ),
        };
        let clients = partitions
            .into_iter()
            .enumerate()
            .map(|(client_id, partition)| ClientRecord {
                client_id,
                partition,
                params: None,
                fisher: None,
            })
            .collect();
        let adam = Adam::new(config.server_lr, init.len());
        Ok(Self {
            classifier,
            config,
            train,
            test,
            clients,
            global: GlobalModel {
                params: init,
                round: 0,
                adam,
            },
            pool,
            last_evaluation: None,
        })
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    pub fn clients(&self) -> &[ClientRecord] {
        &self.clients
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn last_evaluation(&self) -> Option<&Evaluation> {
        self.last_evaluation.as_ref()
    }

    fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(op),
            None => op(),
        }
    }

    /// Broadcast → local training → aggregation → evaluation.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let clock = Instant::now();
        let round = self.global.round + 1;
        let selected = sample_clients(
            self.config.n_clients,
            self.config.participation,
            round,
            self.config.seed,
        );

        let mut starts = Vec::with_capacity(selected.len());
        for &id in &selected {
            let client = &self.clients[id];
            let start = match (&client.params, &client.fisher) {
                (Some(p), Some(f)) if self.config.uses_retention() => client_retention(
                    p,
                    f,
                    &self.global.params,
                    self.config.fisher_threshold,
                )?,
                _ => self.global.params.clone(),
            };
            starts.push(start);
        }

        let opts = self.config.local_options();
        let parallel = self.pool.is_some();
        let outcomes: Vec<Result<LocalOutcome>> = {
            let job = |(id, start): (&usize, &ParameterVector)| {
                let seed = derive_seed(self.config.seed, round, *id as u64, Purpose::LocalShuffle);
                local_train(
                    &self.classifier,
                    &self.train,
                    &self.clients[*id].partition,
                    start,
                    &opts,
                    seed,
                )
            };
            if parallel {
                self.install(|| selected.par_iter().zip(starts.par_iter()).map(job).collect())
            } else {
                selected.iter().zip(starts.iter()).map(job).collect()
            }
        };

        let mut updates = Vec::with_capacity(selected.len());
        let mut client_time = 0.0;
        for (&id, outcome) in selected.iter().zip(outcomes) {
            let outcome = outcome?;
            client_time += outcome.train_secs + outcome.fisher_secs;
            let record = &mut self.clients[id];
            record.params = Some(outcome.params.clone());
            record.fisher = outcome.fisher.clone();
            updates.push(ClientUpdate {
                client_id: id,
                n_samples: record.partition.len(),
                params: outcome.params,
                fisher: outcome.fisher,
                train_loss: outcome.train_loss,
            });
        }
        let mean_client_train_loss =
            updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64;

        let (params, substituted) = match self.config.strategy {
            Strategy::FedAvg => (aggregate_fedavg(&updates)?, Vec::new()),
            Strategy::FedAdam => (
                aggregate_fedadam(&updates, &self.global.params, &mut self.global.adam)?,
                Vec::new(),
            ),
            Strategy::FedFisher => aggregate_fedfisher(&updates, self.config.fisher_threshold)?,
        };
        self.global.params = params;
        self.global.round = round;

        let evaluation = self.install(|| {
            evaluate(&self.classifier, &self.global.params, &self.test, parallel)
        })?;
        let timing = self.config.timing;
        let report = RoundReport {
            round,
            participants: selected,
            test_accuracy: evaluation.accuracy,
            test_loss: evaluation.mean_loss,
            mean_client_train_loss,
            substituted_count: substituted.len(),
            wall_time_s: if timing { clock.elapsed().as_secs_f64() } else { 0.0 },
            client_time_s: if timing { client_time } else { 0.0 },
        };
        self.last_evaluation = Some(evaluation);
        Ok(report)
    }

    /// Runs `config.rounds` rounds.
    pub fn run(&mut self) -> Result<Vec<RoundReport>> {
        (0..self.config.rounds).map(|_| self.run_round()).collect()
    }

    /// Mean test accuracy of each client's own latest local model, over
    /// clients that have trained at least once.
    pub fn local_mean_accuracy(&self) -> Result<Option<f64>> {
        let parallel = self.pool.is_some();
        let mut accs = Vec::new();
        for client in &self.clients {
            if let Some(p) = &client.params {
                let ev = self.install(|| evaluate(&self.classifier, p, &self.test, parallel))?;
                accs.push(ev.accuracy);
            }
        }
        Ok((!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64))
    }
}
