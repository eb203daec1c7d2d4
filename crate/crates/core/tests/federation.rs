mod common;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{config, random_angles, update};
use qfedfisher::dataio::{self, Dataset, Split};
use qfedfisher::fedcore::{
    aggregate_fedadam, evaluate, kaiming_init, local_train, Adam, Federation, LocalTrainOptions,
    Strategy,
};
use qfedfisher::oracle;
use qfedfisher::qsim::CircuitLayout;
use qfedfisher::runner::{self, run_experiment};
use qfedfisher::vqc::{Classifier, ParameterVector, Sample, Task};

const SMALL: &[&str] = &[
    "n_clients=3",
    "samples_per_client=40",
    "synthetic_train=200",
    "synthetic_test=80",
    "rounds=2",
    "threads=1",
    "timing=false",
];

fn small_federation(strategy: Strategy) -> Federation {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("binary-small", SMALL, dir.path());
    let (train, test) = runner::experiment::load_datasets(&cfg).unwrap();
    let clf = runner::experiment::classifier_for(&cfg).unwrap();
    Federation::new(clf, cfg.round_config(strategy), train, test).unwrap()
}

#[test]
fn three_clients_two_rounds_are_bit_identical() {
    for strategy in Strategy::ALL {
        let (mut a, mut b) = (small_federation(strategy), small_federation(strategy));
        assert_eq!(a.run().unwrap(), b.run().unwrap(), "{strategy}");
        assert_eq!(a.global(), b.global(), "{strategy}");
        assert_eq!(a.clients(), b.clients(), "{strategy}");
    }
}

fn artifacts(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn reruns_write_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("binary-small", SMALL, dir.path());
    run_experiment(&cfg, |_, _| {}).unwrap();
    let names: Vec<String> = Strategy::ALL
        .iter()
        .flat_map(|s| [format!("metrics_{s}.csv"), format!("confusion_{s}.csv"), format!("run_{s}.toml")])
        .collect();
    let first: Vec<Vec<u8>> = names.iter().map(|n| artifacts(dir.path(), n)).collect();
    run_experiment(&cfg, |_, _| {}).unwrap();
    for (name, bytes) in names.iter().zip(&first) {
        assert_eq!(&artifacts(dir.path(), name), bytes, "{name}");
    }
}

#[test]
fn parallel_clients_match_single_threaded() {
    let serial_dir = tempfile::tempdir().unwrap();
    let parallel_dir = tempfile::tempdir().unwrap();
    let serial = config("binary-small", SMALL, serial_dir.path());
    let mut parallel = serial.clone();
    parallel.threads = 3;
    parallel.out_dir = parallel_dir.path().to_path_buf();
    run_experiment(&serial, |_, _| {}).unwrap();
    run_experiment(&parallel, |_, _| {}).unwrap();
    for s in Strategy::ALL {
        for name in [format!("metrics_{s}.csv"), format!("confusion_{s}.csv")] {
            assert_eq!(artifacts(serial_dir.path(), &name), artifacts(parallel_dir.path(), &name), "{name}");
        }
    }
    for strategy in Strategy::ALL {
        let mut a = small_federation(strategy);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config("binary-small", SMALL, dir.path());
        cfg.threads = 4;
        let (train, test) = runner::experiment::load_datasets(&cfg).unwrap();
        let clf = runner::experiment::classifier_for(&cfg).unwrap();
        let mut b = Federation::new(clf, cfg.round_config(strategy), train, test).unwrap();
        assert_eq!(a.run().unwrap(), b.run().unwrap());
        assert_eq!(a.global().params, b.global().params);
    }
}

#[test]
fn two_strategies_three_rounds_give_three_rows_each() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("binary-small", SMALL, dir.path());
    cfg.rounds = 3;
    cfg.strategies = vec![Strategy::FedAvg, Strategy::FedFisher];
    let summary = run_experiment(&cfg, |_, _| {}).unwrap();
    assert_eq!(summary.runs.len(), 2);
    for s in [Strategy::FedAvg, Strategy::FedFisher] {
        let mut rdr = csv::Reader::from_path(dir.path().join(format!("metrics_{s}.csv"))).unwrap();
        let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, runner::experiment::METRICS_HEADER);
        let rows: Vec<_> = rdr.records().collect::<Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 3);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[0].parse::<usize>().unwrap(), i + 1);
        }

        let mut rdr = csv::Reader::from_path(dir.path().join(format!("confusion_{s}.csv"))).unwrap();
        let total: usize = rdr
            .records()
            .map(|r| r.unwrap().iter().skip(1).map(|c| c.parse::<usize>().unwrap()).sum::<usize>())
            .sum();
        assert_eq!(total, summary.test_samples);

        let meta: toml::Table = fs::read_to_string(dir.path().join(format!("run_{s}.toml")))
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(meta["strategy"].as_str(), Some(s.name()));
        assert_eq!(meta["seed"].as_integer(), Some(0));
        assert!(meta["code_version"].is_str());
        assert_eq!(meta["totals"]["rounds"].as_integer(), Some(3));
        assert_eq!(meta["config"]["rounds"].as_integer(), Some(3));
    }
    assert!(!dir.path().join("metrics_fedadam.csv").exists());
}

#[test]
fn one_client_one_round_fedavg_adopts_client_params() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "binary-small",
        &["n_clients=1", "samples_per_client=40", "synthetic_train=100", "synthetic_test=20", "threads=1"],
        dir.path(),
    );
    let (train, test) = runner::experiment::load_datasets(&cfg).unwrap();
    let clf = runner::experiment::classifier_for(&cfg).unwrap();
    let mut fed = Federation::new(clf, cfg.round_config(Strategy::FedAvg), train, test).unwrap();
    fed.run_round().unwrap();
    assert_eq!(Some(&fed.global().params), fed.clients()[0].params.as_ref());
}

#[test]
fn zero_threshold_substitutes_only_massless_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let mut set = SMALL.to_vec();
    set.push("fisher_threshold=0.0");
    let cfg = config("binary-small", &set, dir.path());
    let (train, test) = runner::experiment::load_datasets(&cfg).unwrap();
    let clf = runner::experiment::classifier_for(&cfg).unwrap();
    let mut fed = Federation::new(clf, cfg.round_config(Strategy::FedFisher), train, test).unwrap();
    for _ in 0..cfg.rounds {
        let report = fed.run_round().unwrap();
        // min-max normalization puts a zero in every layer, so some mass can vanish
        let n = fed.classifier().layout.n_params();
        let massless = (0..n)
            .filter(|&j| {
                report
                    .participants
                    .iter()
                    .map(|&id| fed.clients()[id].fisher.as_ref().unwrap()[j])
                    .sum::<f64>()
                    <= 1e-12
            })
            .count();
        assert_eq!(report.substituted_count, massless);
        assert!(massless < n);
    }
}

#[test]
fn fedadam_three_rounds_match_hand_stepped_recursion() {
    let scripted = [
        [(100, [0.3, 0.0, 1.0]), (300, [0.7, -0.4, 1.0])],
        [(200, [0.1, 0.2, 0.9]), (200, [0.5, 0.2, 1.3])],
        [(50, [1.0, -1.0, 1.0]), (150, [-1.0, 1.0, 1.0])],
    ];
    // θ_t from m_t = 0.9 m + 0.1 Δ, v_t = 0.999 v + 0.001 Δ², bias-corrected,
    // lr 0.01, ε 1e-8, worked through separately in double precision
    let expected = [
        [0.5099999990000001, -0.2099999990000001, 1.0],
        [0.5061604914749624, -0.2043573505630349, 1.0074413671835647],
        [0.4992682119697339, -0.1966358405521784, 1.0127033995643309],
    ];
    let mut global = ParameterVector::from_raw(vec![0.5, -0.2, 1.0]);
    let mut server = Adam::new(0.01, 3);
    for (round, want) in scripted.iter().zip(expected) {
        let updates: Vec<_> = round
            .iter()
            .enumerate()
            .map(|(i, (n, p))| update(i, *n, p.to_vec(), None))
            .collect();
        global = aggregate_fedadam(&updates, &global, &mut server).unwrap();
        for (g, w) in global.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
    assert_eq!(server.steps(), 3);
}

fn toy_dataset(seed: u64) -> Dataset {
    let raw = dataio::synthesize_binary(64, 4, 4.0, seed, Split::Train).unwrap();
    dataio::prepare_for_encoding(&raw, 4).unwrap()
}

#[test]
fn local_training_mostly_lowers_the_loss() {
    let layout = CircuitLayout::new(2, 2);
    let clf = Classifier::new(layout, Task::Binary).unwrap();
    let opts = LocalTrainOptions {
        epochs: 5,
        batch_size: 8,
        lr: 0.05,
        fisher: None,
    };
    for seed in 0..5 {
        let data = toy_dataset(100 + seed);
        let partition: Vec<usize> = (0..data.len()).collect();
        let start = kaiming_init(&layout, seed);
        let out = local_train(&clf, &data, &partition, &start, &opts, seed).unwrap();
        let decreases = out.epoch_losses.windows(2).filter(|w| w[1] < w[0]).count();
        let initial = evaluate(&clf, &start, &data, false).unwrap().mean_loss;
        let first = usize::from(out.epoch_losses[0] < initial);
        assert!(decreases + first >= 4, "seed {seed}: {initial} then {:?}", out.epoch_losses);
    }
}

#[test]
fn untrained_ten_class_model_is_near_chance() {
    let layout = CircuitLayout::new(10, 2);
    let clf = Classifier::new(layout, Task::Multiclass(10)).unwrap();
    let mut accs = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let features: Vec<f64> = (0..n * 1024).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let data = Dataset::new(features, 1024, labels, 10, Split::Test).unwrap();
        let params = kaiming_init(&layout, seed);
        accs.push(evaluate(&clf, &params, &data, false).unwrap().accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.1).abs() <= 0.05, "{accs:?}");
}

#[test]
fn zero_separation_cannot_be_learned() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "binary-small",
        &["class_separation=0.0", "rounds=5", "strategies=[\"fedavg\"]", "threads=1", "timing=false"],
        dir.path(),
    );
    let summary = run_experiment(&cfg, |_, _| {}).unwrap();
    let acc = summary.runs[0].final_report().test_accuracy;
    assert!((acc - 0.5).abs() < 0.06, "accuracy {acc}");
}

#[test]
fn sample_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for task in [Task::Binary, Task::Multiclass(3)] {
        let layout = CircuitLayout::new(3, 2);
        let clf = Classifier::new(layout, task).unwrap();
        for _ in 0..50 {
            let params = random_angles(layout.n_params(), &mut rng);
            let features: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let label = rng.random_range(0..task.n_classes());
            let sample = Sample { features: &features, label };
            let (_, grad) = clf.sample_gradient(&params, sample).unwrap();
            let loss = |p: &[f64]| clf.loss(&clf.forward(p, &features).unwrap(), label).unwrap();
            let fd = oracle::central_difference(loss, &params, 1e-5);
            for (g, f) in grad.iter().zip(&fd) {
                assert!((g - f).abs() < 1e-5, "{task:?}: {g} vs {f}");
            }
        }
    }
}
