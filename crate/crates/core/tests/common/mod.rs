#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;

use qfedfisher::fedcore::ClientUpdate;
use qfedfisher::qsim::StateVector;
use qfedfisher::runner::{parse_config_str, ExperimentConfig, FlagOverrides};
use qfedfisher::vqc::{FisherVector, ParameterVector};

pub fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

/// Resolves a preset with `--set` style overrides, writing into `out`.
pub fn config(preset: &str, set: &[&str], out: &Path) -> ExperimentConfig {
    let flags = FlagOverrides {
        preset: Some(preset.to_string()),
        out_dir: Some(out.to_path_buf()),
        set: set.iter().map(|s| s.to_string()).collect(),
        ..Default::default()
    };
    let mut cfg = parse_config_str("", &flags, None).expect("valid test config");
    if cfg.train_images.is_some() {
        let dir = mnist_dir();
        cfg.train_images = Some(dir.join("train-images-idx3-ubyte.gz"));
        cfg.train_labels = Some(dir.join("train-labels-idx1-ubyte.gz"));
        cfg.test_images = Some(dir.join("t10k-images-idx3-ubyte.gz"));
        cfg.test_labels = Some(dir.join("t10k-labels-idx1-ubyte.gz"));
    }
    cfg
}

pub fn random_state(n_qubits: usize, rng: &mut impl Rng) -> StateVector {
    let x: Vec<f64> = (0..1 << n_qubits).map(|_| rng.random_range(-1.0..1.0)).collect();
    StateVector::amplitude_encode(&x).expect("nonzero input")
}

pub fn random_angles(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect()
}

pub fn update(id: usize, n_samples: usize, params: Vec<f64>, fisher: Option<Vec<f64>>) -> ClientUpdate {
    ClientUpdate {
        client_id: id,
        n_samples,
        params: ParameterVector::from_raw(params),
        fisher: fisher.map(FisherVector::new),
        train_loss: 0.0,
    }
}
