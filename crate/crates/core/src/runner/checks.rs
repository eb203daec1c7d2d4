//! Randomized comparisons of the production kernels against the brute-force
//! references in [`crate::oracle`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fedcore::{aggregate_fedfisher, ClientUpdate};
use crate::oracle;
use crate::qsim::{adjoint_gradient, run_circuit, CircuitLayout, StateVector};
use crate::vqc::{FisherVector, ParameterVector};

/// Largest deviation seen by one check, with the tolerance it must meet.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn random_state(n_qubits: usize, rng: &mut impl Rng) -> StateVector {
    let x: Vec<f64> = (0..1 << n_qubits).map(|_| rng.random_range(-1.0..1.0)).collect();
    StateVector::amplitude_encode(&x).expect("nonzero random input")
}

fn random_angles(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect()
}

/// Runs the simulator, gradient and aggregation checks with `cases` random
/// draws each.
pub fn run_oracle_checks(cases: usize, seed: u64) -> Vec<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sim_err: f64 = 0.0;
    for case in 0..cases {
        let n = 1 + case % 4;
        let layers = 1 + case % 3;
        let layout = CircuitLayout::new(n, layers);
        let params = random_angles(layout.n_params(), &mut rng);
        let input = random_state(n, &mut rng);
        let fast = run_circuit(&layout, &params, &input).expect("valid circuit");
        let dense = oracle::dense_circuit_apply(n, layers, &params, input.amplitudes());
        for (a, b) in fast.amplitudes().iter().zip(&dense) {
            sim_err = sim_err.max((a - b).norm());
        }
    }

    let (mut shift_err, mut fd_err): (f64, f64) = (0.0, 0.0);
    let layout = CircuitLayout::new(4, 3);
    for _ in 0..cases {
        let params = random_angles(layout.n_params(), &mut rng);
        let input = random_state(4, &mut rng);
        let observable: Vec<(usize, f64)> =
            (0..4).map(|q| (q, rng.random_range(-1.0..1.0))).collect();
        let adj = adjoint_gradient(&layout, &params, &input, &observable).expect("valid circuit");
        let shift = oracle::parameter_shift_gradient(&layout, &params, &input, &observable);
        let fd = oracle::finite_difference_gradient(&layout, &params, &input, &observable, 1e-4);
        for ((a, s), f) in adj.gradient.iter().zip(&shift).zip(&fd) {
            shift_err = shift_err.max((a - s).abs());
            fd_err = fd_err.max((a - f).abs());
        }
    }

    let mut agg_err: f64 = 0.0;
    let mut membership_mismatches = 0usize;
    for _ in 0..cases {
        let n_clients = rng.random_range(1..=5);
        let n_params = rng.random_range(1..=20);
        let sizes: Vec<usize> = (0..n_clients).map(|_| rng.random_range(1..=500)).collect();
        let params: Vec<Vec<f64>> = (0..n_clients).map(|_| random_angles(n_params, &mut rng)).collect();
        let fisher: Vec<Vec<f64>> = (0..n_clients)
            .map(|_| {
                (0..n_params)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            rng.random_range(0.0..0.004)
                        } else {
                            rng.random_range(0.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let delta = 0.01;
        let updates: Vec<ClientUpdate> = (0..n_clients)
            .map(|i| ClientUpdate {
                client_id: i,
                n_samples: sizes[i],
                params: ParameterVector::from_raw(params[i].clone()),
                fisher: Some(FisherVector::new(fisher[i].clone())),
                train_loss: 0.0,
            })
            .collect();
        let (got, got_idx) = aggregate_fedfisher(&updates, delta).expect("valid updates");
        let (want, want_idx) = oracle::fedfisher_bruteforce(&sizes, &params, &fisher, delta);
        if got_idx != want_idx {
            membership_mismatches += 1;
        }
        for (a, b) in got.iter().zip(&want) {
            agg_err = agg_err.max((a - b).abs());
        }
    }

    vec![
        OracleCheck {
            name: "run_circuit vs dense unitary (n<=4)",
            cases,
            max_error: sim_err,
            tolerance: 1e-12,
        },
        OracleCheck {
            name: "adjoint vs parameter shift",
            cases,
            max_error: shift_err,
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "adjoint vs central differences (h=1e-4)",
            cases,
            max_error: fd_err,
            tolerance: 1e-5,
        },
        OracleCheck {
            name: "fedfisher vs brute-force aggregation",
            cases,
            max_error: agg_err,
            tolerance: 1e-12,
        },
        OracleCheck {
            name: "fedfisher substitution-set mismatches",
            cases,
            max_error: membership_mismatches as f64,
            tolerance: 0.0,
        },
    ]
}

