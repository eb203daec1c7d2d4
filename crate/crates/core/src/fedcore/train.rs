//! Client-side training, Fisher extraction and model evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::optim::Adam;
use super::{FedError, Result};
use crate::dataio::Dataset;
use crate::qsim::CircuitLayout;
use crate::vqc::{
    normalize_fisher_layerwise, Classifier, FisherMode, FisherVector, ParameterVector, Sample,
};

/// Angles drawn from `Normal(0, sqrt(2 / n_qubits))`.
pub fn kaiming_init(layout: &CircuitLayout, seed: u64) -> ParameterVector {
    let std = (2.0 / layout.n_qubits as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParameterVector::from_raw((0..layout.n_params()).map(|_| normal.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Compute the normalized Fisher diagonal after training.
    pub fisher: Option<FisherMode>,
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: ParameterVector,
    /// Layer-wise min-max normalized Fisher at the final parameters.
    pub fisher: Option<FisherVector>,
    /// Mean per-sample loss over all epochs, measured before each batch step.
    pub train_loss: f64,
    pub epoch_losses: Vec<f64>,
    /// Seconds spent in gradient descent and in the Fisher pass.
    pub train_secs: f64,
    pub fisher_secs: f64,
}

/// Mini-batch Adam on one client's partition, starting from `start` with a
/// fresh optimizer. The partition is reshuffled every epoch from `seed`.
pub fn local_train(
    classifier: &Classifier,
    data: &Dataset,
    partition: &[usize],
    start: &ParameterVector,
    opts: &LocalTrainOptions,
    seed: u64,
) -> Result<LocalOutcome> {
    if partition.is_empty() {
        return Err(FedError::EmptyPartition);
    }
    let clock = Instant::now();
    let n_params = classifier.layout.n_params();
    let mut params = start.clone();
    let mut adam = Adam::new(opts.lr, n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = partition.to_vec();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut batch_grad = vec![0.0; n_params];

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size.max(1)) {
            batch_grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let sample = Sample {
                    features: data.row(i),
                    label: data.labels()[i],
                };
                let (loss, grad) = classifier.sample_gradient(&params, sample)?;
                epoch_loss += loss;
                for (b, g) in batch_grad.iter_mut().zip(&grad) {
                    *b += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &batch_grad);
        }
        epoch_losses.push(epoch_loss / order.len() as f64);
    }
    let train_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let fisher = match opts.fisher {
        Some(mode) => {
            let samples: Vec<Sample<'_>> = partition
                .iter()
                .map(|&i| Sample {
                    features: data.row(i),
                    label: data.labels()[i],
                })
                .collect();
            let raw = classifier.fisher_diagonal(&params, &samples, mode)?;
            Some(normalize_fisher_layerwise(&raw, &classifier.layout))
        }
        None => None,
    };
    let fisher_secs = clock.elapsed().as_secs_f64();

    let train_loss = if epoch_losses.is_empty() {
        0.0
    } else {
        epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64
    };
    Ok(LocalOutcome {
        params,
        fisher,
        train_loss,
        epoch_losses,
        train_secs,
        fisher_secs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[actual][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

/// Scores `params` on every row of `test`. Per-row work may run on the
/// current rayon pool; the reduction is sequential in row order.
pub fn evaluate(
    classifier: &Classifier,
    params: &[f64],
    test: &Dataset,
    parallel: bool,
) -> Result<Evaluation> {
    use rayon::prelude::*;

    if test.is_empty() {
        return Err(FedError::EmptyTestSet);
    }
    let score = |i: usize| -> Result<(f64, usize, usize)> {
        let label = test.labels()[i];
        let pred = classifier.forward(params, test.row(i))?;
        Ok((classifier.loss(&pred, label)?, label, pred.predicted_class))
    };
    let rows: Vec<(f64, usize, usize)> = if parallel {
        (0..test.len()).into_par_iter().map(score).collect::<Result<_>>()?
    } else {
        (0..test.len()).map(score).collect::<Result<_>>()?
    };
    let k = classifier.n_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &(l, actual, predicted) in &rows {
        loss += l;
        confusion[actual][predicted] += 1;
        correct += usize::from(actual == predicted);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / rows.len() as f64,
        mean_loss: loss / rows.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Split;
    use crate::vqc::Task;

    fn toy() -> (Classifier, Dataset) {
        let clf = Classifier::new(CircuitLayout::new(2, 2), Task::Binary).unwrap();
        // last qubit encodes the label exactly
        let features = vec![
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ];
        let ds = Dataset::new(features, 4, vec![0, 1, 0, 1], 2, Split::Test).unwrap();
        (clf, ds)
    }

    #[test]
    fn perfect_predictions_give_diagonal_confusion() {
        let (clf, ds) = toy();
        let ev = evaluate(&clf, &[0.0; 8], &ds, false).unwrap();
        assert_eq!(ev.accuracy, 1.0);
        assert_eq!(ev.confusion, vec![vec![2, 0], vec![0, 2]]);
        assert_eq!(ev, evaluate(&clf, &[0.0; 8], &ds, true).unwrap());
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let (clf, ds) = toy();
        let start = ParameterVector::zeros(&clf.layout);
        let opts = LocalTrainOptions {
            epochs: 3,
            batch_size: 2,
            lr: 0.1,
            fisher: Some(FisherMode::PerSample),
        };
        let out = local_train(&clf, &ds, &[0, 1, 2, 3], &start, &opts, 5).unwrap();
        assert_eq!(out.params, start);
        assert!(out.fisher.unwrap().iter().all(|&f| f == 0.0));
        assert!(out.train_loss < 1e-10);
    }

    #[test]
    fn empty_inputs_rejected() {
        let (clf, ds) = toy();
        let start = ParameterVector::zeros(&clf.layout);
        let opts = LocalTrainOptions {
            epochs: 1,
            batch_size: 2,
            lr: 0.1,
            fisher: None,
        };
        assert!(matches!(
            local_train(&clf, &ds, &[], &start, &opts, 0),
            Err(FedError::EmptyPartition)
        ));
        assert!(matches!(
            evaluate(&clf, &[0.0; 8], &ds.subset(&[]), false),
            Err(FedError::EmptyTestSet)
        ));
    }

    #[test]
    fn kaiming_spread() {
        let layout = CircuitLayout::new(8, 100);
        let p = kaiming_init(&layout, 1);
        let var = p.iter().map(|x| x * x).sum::<f64>() / p.len() as f64;
        assert!((var - 0.25).abs() < 0.03, "{var}");
        assert_eq!(p, kaiming_init(&layout, 1));
    }
}
